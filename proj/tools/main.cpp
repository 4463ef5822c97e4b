#include <sdn/cli.hpp>
#include <sdn/runtime.hpp>

int main(int argc, char** argv)
{
    sdn::tune_allocator();
    return sdn::run_cli({argv + 1, argv + argc});
}
