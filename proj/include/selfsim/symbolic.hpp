#pragma once

// Finite words over the alphabet {1, ..., d}: enumeration, shift, cylinder
// measures and the address map onto [0, 1].

#include <selfsim/errors.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace selfsim {

/// Upper bound on the number of cells d^m handled at one level (3^16).
inline constexpr std::uint64_t kDefaultMaxCells = 43046721ULL;

/// Largest alphabet supported by the 8-bit digit storage.
inline constexpr int kMaxAlphabet = 255;

/// d^m, throwing CapacityError if it overflows or exceeds `cap`.
inline std::uint64_t checked_power(int d, int m, std::uint64_t cap = kDefaultMaxCells) {
    if (d < 1 || m < 0) throw DomainError("checked_power: need d >= 1 and m >= 0");
    std::uint64_t n = 1;
    for (int i = 0; i < m; ++i) {
        if (n > cap / static_cast<std::uint64_t>(d))
            throw CapacityError("level " + std::to_string(m) + " with " + std::to_string(d) +
                                " symbols exceeds the cell capacity of " + std::to_string(cap));
        n *= static_cast<std::uint64_t>(d);
    }
    return n;
}

/// A finite itinerary w = w_1 ... w_m with 1-based digits. The integer encoding
/// sum (w_i - 1) d^(m-i) is 0-based and lexicographic (w_1 most significant).
class Word {
public:
    Word() = default;

    explicit Word(int alphabet_size) : alphabet_(check_alphabet(alphabet_size)) {}

    Word(int alphabet_size, std::span<const int> digits) : alphabet_(check_alphabet(alphabet_size)) {
        digits_.reserve(digits.size());
        for (int s : digits) digits_.push_back(check_digit(s));
    }

    Word(int alphabet_size, std::initializer_list<int> digits)
        : Word(alphabet_size, std::span<const int>(digits.begin(), digits.size())) {}

    /// Inverse of encode() for words of the given length.
    static Word decode(int alphabet_size, int length, std::uint64_t index) {
        Word w(alphabet_size);
        const auto n = checked_power(alphabet_size, length, std::numeric_limits<std::uint64_t>::max());
        if (index >= n) throw DomainError("Word::decode: index out of range for level");
        w.digits_.resize(static_cast<std::size_t>(length));
        for (int i = length - 1; i >= 0; --i) {
            w.digits_[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(index % alphabet_size + 1);
            index /= static_cast<std::uint64_t>(alphabet_size);
        }
        return w;
    }

    /// The word `symbol symbol ... symbol` of the given length.
    static Word repeat(int alphabet_size, int symbol, int count) {
        Word w(alphabet_size);
        w.digits_.assign(static_cast<std::size_t>(count), w.check_digit(symbol));
        return w;
    }

    int alphabet_size() const noexcept { return alphabet_; }
    int length() const noexcept { return static_cast<int>(digits_.size()); }
    bool empty() const noexcept { return digits_.empty(); }

    /// i-th digit, 1-based position (w_1 is digit(1)).
    int digit(int position) const {
        if (position < 1 || position > length()) throw DomainError("Word::digit: position out of range");
        return digits_[static_cast<std::size_t>(position - 1)];
    }

    std::span<const std::uint8_t> digits() const noexcept { return digits_; }

    std::uint64_t encode() const {
        checked_power(alphabet_, length(), std::numeric_limits<std::uint64_t>::max());
        std::uint64_t v = 0;
        for (auto s : digits_) v = v * static_cast<std::uint64_t>(alphabet_) + (s - 1u);
        return v;
    }

    /// sigma(w): drop the first digit.
    Word shift() const {
        if (digits_.empty()) throw DomainError("shift of the empty word");
        Word w(alphabet_);
        w.digits_.assign(digits_.begin() + 1, digits_.end());
        return w;
    }

    /// sigma_i^{-1}(w) = i w.
    Word prepend(int symbol) const {
        Word w(alphabet_);
        w.digits_.reserve(digits_.size() + 1);
        w.digits_.push_back(check_digit(symbol));
        w.digits_.insert(w.digits_.end(), digits_.begin(), digits_.end());
        return w;
    }

    /// w j
    Word append(int symbol) const {
        Word w = *this;
        w.digits_.push_back(check_digit(symbol));
        return w;
    }

    Word concat(const Word& tail) const {
        if (tail.alphabet_ != alphabet_) throw DomainError("Word::concat: alphabet mismatch");
        Word w = *this;
        w.digits_.insert(w.digits_.end(), tail.digits_.begin(), tail.digits_.end());
        return w;
    }

    Word prefix(int n) const {
        if (n < 0 || n > length()) throw DomainError("Word::prefix: length out of range");
        Word w(alphabet_);
        w.digits_.assign(digits_.begin(), digits_.begin() + n);
        return w;
    }

    /// Digits concatenated ("132"); dot-separated when d > 9.
    std::string str() const {
        std::string s;
        for (std::size_t i = 0; i < digits_.size(); ++i) {
            if (alphabet_ > 9 && i > 0) s += '.';
            s += std::to_string(digits_[i]);
        }
        return s;
    }

    friend bool operator==(const Word&, const Word&) = default;

    friend std::strong_ordering operator<=>(const Word& a, const Word& b) {
        if (auto c = a.alphabet_ <=> b.alphabet_; c != 0) return c;
        return std::lexicographical_compare_three_way(a.digits_.begin(), a.digits_.end(),
                                                      b.digits_.begin(), b.digits_.end());
    }

private:
    static int check_alphabet(int d) {
        if (d < 2 || d > kMaxAlphabet) throw DomainError("alphabet size must be in [2, 255]");
        return d;
    }

    std::uint8_t check_digit(int s) const {
        if (s < 1 || s > alphabet_)
            throw DomainError("digit " + std::to_string(s) + " outside [1, " + std::to_string(alphabet_) + "]");
        return static_cast<std::uint8_t>(s);
    }

    int alphabet_ = 2;
    std::vector<std::uint8_t> digits_;
};

/// Bernoulli weights p_1..p_d, all positive, summing to one within 1e-12.
class BernoulliWeights {
public:
    explicit BernoulliWeights(std::vector<double> p) : p_(std::move(p)) {
        if (p_.size() < 2 || p_.size() > static_cast<std::size_t>(kMaxAlphabet))
            throw DomainError("Bernoulli weights need between 2 and 255 entries");
        double total = 0.0;
        for (double x : p_) {
            if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("Bernoulli weights must be positive");
            total += x;
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("Bernoulli weights must sum to 1");
    }

    static BernoulliWeights uniform(int d) {
        if (d < 2) throw DomainError("uniform weights need d >= 2");
        return BernoulliWeights(std::vector<double>(static_cast<std::size_t>(d), 1.0 / d));
    }

    int size() const noexcept { return static_cast<int>(p_.size()); }

    /// p_i for a 1-based symbol i.
    double operator()(int symbol) const { return p_.at(static_cast<std::size_t>(symbol - 1)); }

    std::span<const double> values() const noexcept { return p_; }

    bool is_uniform() const noexcept {
        return std::all_of(p_.begin(), p_.end(), [&](double x) { return x == p_.front(); });
    }

private:
    std::vector<double> p_;
};

/// All d^m words of length m in lexicographic order. Level 0 yields the empty word.
inline std::vector<Word> enumerate_words(int d, int m, std::uint64_t cap = kDefaultMaxCells) {
    if (d < 2) throw DomainError("enumerate_words: need d >= 2");
    if (m < 0) throw DomainError("enumerate_words: need m >= 0");
    const auto n = checked_power(d, m, cap);
    std::vector<Word> words;
    words.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) words.push_back(Word::decode(d, m, i));
    return words;
}

/// mu(K_w) = p_{w_1} ... p_{w_m}; the empty word has measure 1.
inline double cylinder_measure(const Word& w, const BernoulliWeights& p) {
    if (w.alphabet_size() != p.size()) throw DomainError("cylinder_measure: alphabet / weight size mismatch");
    double mu = 1.0;
    for (auto s : w.digits()) mu *= p(s);
    return mu;
}

/// mu(K_w) for every |w| = m, indexed by the word encoding. Bitwise equal to
/// cylinder_measure (same left-to-right product).
inline std::vector<double> cell_measures(const BernoulliWeights& p, int m, std::uint64_t cap = kDefaultMaxCells) {
    const int d = p.size();
    const auto n = checked_power(d, m, cap);
    std::vector<double> mu(static_cast<std::size_t>(n));
    mu[0] = 1.0;
    std::size_t count = 1;
    for (int level = 0; level < m; ++level) {
        // expand in place from the back so parents are read before being overwritten
        for (std::size_t k = count; k-- > 0;) {
            const double parent = mu[k];
            for (int j = d; j >= 1; --j) mu[k * d + static_cast<std::size_t>(j - 1)] = parent * p(j);
        }
        count *= static_cast<std::size_t>(d);
    }
    return mu;
}

/// h(w) = sum_i (w_i - 1) / d^i, the left end of the d-adic interval of the cell.
inline double address_map_h(const Word& w) {
    const double d = w.alphabet_size();
    double x = 0.0;
    auto digits = w.digits();
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) x = (x + (*it - 1)) / d;
    return x;
}

} // namespace selfsim
