"""Stage orchestration and report writing."""
