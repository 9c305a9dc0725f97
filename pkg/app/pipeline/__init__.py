# Workflow orchestration
