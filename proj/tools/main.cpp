#include <string>
#include <vector>

#include "textguard/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return textguard::cli::run(args);
}
