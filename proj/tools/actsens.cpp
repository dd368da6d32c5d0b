#include "actsens_app.hpp"

int main(int argc, char** argv) { return actsens::cli::run(argc, argv); }
