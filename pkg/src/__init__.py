"""pcurl-lab: a discrete p-curl solver laboratory."""
