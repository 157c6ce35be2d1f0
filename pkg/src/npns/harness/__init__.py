"""Configuration, run loop, verification studies and the command line."""
