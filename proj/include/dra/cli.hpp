#pragma once

namespace dra {

// Entry point behind the `dra` binary: train | eval | ablate | synth | selftest.
int cli_dispatch(int argc, const char* const* argv);

} // namespace dra
