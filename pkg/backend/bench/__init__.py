# Benchmark orchestration package
