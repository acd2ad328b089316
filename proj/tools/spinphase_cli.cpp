#include "spinphase/cli_io.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return spinphase::run_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
