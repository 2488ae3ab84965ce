#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdfrac {

using Index = int;
using Vec3 = Eigen::Vector3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Degenerate or inconsistent geometry (zero measures, warped cells, non-conforming grids).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

/// Offsets + flat values, the usual compressed layout for ragged adjacency.
template <class T>
struct Jagged {
    std::vector<Index> offsets{0};
    std::vector<T> values;

    Index size() const noexcept { return static_cast<Index>(offsets.size()) - 1; }

    std::span<const T> operator[](Index i) const {
        return {values.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
    }
    std::span<T> operator[](Index i) {
        return {values.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
    }

    template <class Range>
    void push_back(const Range& r) {
        values.insert(values.end(), std::begin(r), std::end(r));
        offsets.push_back(static_cast<Index>(values.size()));
    }

    void clear() {
        offsets.assign(1, 0);
        values.clear();
    }

    bool operator==(const Jagged&) const = default;
};

}  // namespace mdfrac
