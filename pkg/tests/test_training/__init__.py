"""Long-running training tests, deselected by default (run them with `pytest -m slow`)."""
