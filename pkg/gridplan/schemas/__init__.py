# Pydantic models for grid files, profile parameters, study configs and results
