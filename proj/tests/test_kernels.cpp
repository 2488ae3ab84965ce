#include <doctest.h>

#include "mdfrac/kernels.hpp"
#include "mdfrac/linalg.hpp"

#include <random>

using namespace mdfrac;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("scalar kernels are always available and listed first") {
    const auto isas = kernels::available();
    REQUIRE(!isas.empty());
    CHECK(isas.front() == kernels::Isa::scalar);
    CHECK(kernels::table(kernels::Isa::scalar).isa == kernels::Isa::scalar);
}

TEST_CASE("vector variants match the scalar reference") {
    std::mt19937_64 rng(42);
    const auto& ref = kernels::table(kernels::Isa::scalar);
    for (auto isa : kernels::available()) {
        const auto& k = kernels::table(isa);
        CAPTURE(kernels::isa_name(isa));
        // lengths around the vector width and its tails
        for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 16u, 17u, 1000u, 1003u}) {
            const auto x = random_vector(n, rng);
            const auto y = random_vector(n, rng);
            CHECK(rel_diff(k.dot(x, y), ref.dot(x, y)) <= 1e-13);

            auto ya = y, yb = y;
            k.axpy(0.37, x, ya);
            ref.axpy(0.37, x, yb);
            for (std::size_t i = 0; i < n; ++i) CHECK(ya[i] == doctest::Approx(yb[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("vector spmv matches the scalar reference") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> col(0, 96);
    std::uniform_int_distribution<int> len(0, 13);
    Triplets t(80, 97);
    for (int r = 0; r < 80; ++r) {
        const int n = len(rng);
        for (int k = 0; k < n; ++k) t.add(r, col(rng), std::uniform_real_distribution<double>(-2, 2)(rng));
    }
    const auto a = csr_from_triplets(t);
    const auto x = random_vector(97, rng);
    std::vector<double> yref(80);
    kernels::table(kernels::Isa::scalar).spmv(a.view(), x, yref);
    const auto dense = a.to_dense();
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), 97);
    const Eigen::VectorXd yd = dense * xv;
    for (int i = 0; i < 80; ++i) CHECK(yref[i] == doctest::Approx(yd[i]).epsilon(1e-13));
    for (auto isa : kernels::available()) {
        std::vector<double> y(80);
        kernels::table(isa).spmv(a.view(), x, y);
        for (int i = 0; i < 80; ++i) CHECK(y[i] == doctest::Approx(yref[i]).epsilon(1e-13));
    }
}

TEST_CASE("forced selection changes the active table") {
    const auto before = kernels::active().isa;
    kernels::select(kernels::Isa::scalar);
    CHECK(kernels::active().isa == kernels::Isa::scalar);
    kernels::select(before);
    CHECK(kernels::active().isa == before);
}

TEST_CASE("unknown ISA on this machine is rejected") {
#if defined(__x86_64__)
    CHECK_THROWS_AS(kernels::table(kernels::Isa::neon), Error);
#else
    CHECK_THROWS_AS(kernels::table(kernels::Isa::avx2), Error);
#endif
}
