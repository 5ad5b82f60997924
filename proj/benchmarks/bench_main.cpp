#include <benchmark/benchmark.h>

// The packaged benchmark_main static library carries incompatible LTO
// bytecode on some toolchains; an own main avoids linking it.
BENCHMARK_MAIN();
