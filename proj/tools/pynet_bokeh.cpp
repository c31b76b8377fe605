#include "bokeh/cli.hpp"

int main(int argc, char** argv) { return bokeh::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
