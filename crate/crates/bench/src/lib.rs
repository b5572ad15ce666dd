//! Benchmark harness for the loopnav pipeline.
