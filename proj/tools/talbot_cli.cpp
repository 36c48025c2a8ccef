#include "talbot/app/commands.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return talbot::app::run_cli(argc, argv, std::cout, std::cerr);
}
