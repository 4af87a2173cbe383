// problem: count-primes
#include <iostream>
#include <vector>

int countPrimes(int n) {
    if (n < 3) return 0;
    std::vector<bool> composite(n, false);
    int count = 0;
    for (long long i = 2; i < n; i++) {
        if (composite[i]) continue;
        count++;
        for (long long j = i * i; j < n; j += i) composite[j] = true;
    }
    return count;
}

int main() {
    int n;
    std::cin >> n;
    std::cout << countPrimes(n) << "\n";
    return 0;
}
