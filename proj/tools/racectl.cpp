#include <iostream>
int main(){std::cout<<"wip\n";}
