"""Pipeline package — configuration, command orchestration and report writing."""
