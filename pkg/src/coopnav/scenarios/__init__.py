"""Bundled scenario definitions (JSON files, loaded via config.bundled_scenario_path)."""
