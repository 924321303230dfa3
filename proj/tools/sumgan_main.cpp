#include "sumgan/cli.hpp"

int main(int argc, char** argv) {
    return sumgan::cli::main_entry(argc, argv);
}
