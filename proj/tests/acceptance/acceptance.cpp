// Acceptance suite: one line per criterion. Populated incrementally.
#include <cstdio>
int main() {
    std::puts("acceptance suite placeholder");
    return 0;
}
