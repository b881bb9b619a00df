"""A numerical lab for the quadratic Szego equation, built with the Meltano SDK."""
