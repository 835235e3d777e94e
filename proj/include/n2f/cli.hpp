#pragma once

namespace n2f {
int cli_main(int argc, char** argv);
}  // namespace n2f
