#pragma once

/**
 * @file setcore.hpp
 * @brief Finite universe, fixed-width subset masks, and deduplicated set families.
 *
 * Elements of a universe of size N are the dense integers 0..N-1. A SubsetMask
 * is a fixed array of 64-bit words, so every set operation is allocation-free.
 * The word count is a compile-time constant (SPREADLAB_MASK_WORDS, default 2,
 * i.e. N <= 128) and is checked when a Universe is constructed.
 */

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iterator>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spreadlab/numeric.hpp"

#ifndef SPREADLAB_MASK_WORDS
#define SPREADLAB_MASK_WORDS 2
#endif

namespace spreadlab {

inline constexpr std::size_t kMaskWords = SPREADLAB_MASK_WORDS;
inline constexpr int kMaxUniverse = static_cast<int>(64 * kMaskWords);
/// Largest |a| accepted by enumerate_subsets_of.
inline constexpr int kMaxEnumeratedBits = 30;

class Universe {
 public:
  explicit Universe(int size) : size_(size) {
    if (size < 1) throw ArgumentError("universe size must be >= 1");
    if (size > kMaxUniverse) {
      throw CapacityError("universe size " + std::to_string(size) + " exceeds mask capacity " +
                          std::to_string(kMaxUniverse));
    }
  }
  [[nodiscard]] int size() const { return size_; }
  friend bool operator==(Universe, Universe) = default;

 private:
  int size_;
};

class SubsetMask {
 public:
  using Word = std::uint64_t;

  explicit SubsetMask(Universe u) : n_(static_cast<std::uint16_t>(u.size())) {}
  SubsetMask(Universe u, std::initializer_list<int> elements) : SubsetMask(u) {
    for (int e : elements) insert(e);
  }
  SubsetMask(Universe u, const std::vector<int>& elements) : SubsetMask(u) {
    for (int e : elements) insert(e);
  }

  static SubsetMask full(Universe u) {
    SubsetMask m(u);
    for (int i = 0; i < u.size(); ++i) m.insert(i);
    return m;
  }

  [[nodiscard]] Universe universe() const { return Universe(n_); }
  [[nodiscard]] int universe_size() const { return n_; }

  [[nodiscard]] bool contains(int e) const {
    check_element(e);
    return (words_[word_of(e)] >> bit_of(e)) & Word{1};
  }
  void insert(int e) {
    check_element(e);
    words_[word_of(e)] |= Word{1} << bit_of(e);
  }
  void erase(int e) {
    check_element(e);
    words_[word_of(e)] &= ~(Word{1} << bit_of(e));
  }

  [[nodiscard]] int size() const {
    int c = 0;
    for (Word w : words_) c += std::popcount(w);
    return c;
  }
  [[nodiscard]] bool empty() const {
    return std::all_of(words_.begin(), words_.end(), [](Word w) { return w == 0; });
  }

  [[nodiscard]] std::vector<int> elements() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::size_t w = 0; w < kMaskWords; ++w) {
      Word bits = words_[w];
      while (bits != 0) {
        out.push_back(static_cast<int>(w * 64 + static_cast<std::size_t>(std::countr_zero(bits))));
        bits &= bits - 1;
      }
    }
    return out;
  }

  [[nodiscard]] const std::array<Word, kMaskWords>& words() const { return words_; }

  /// Low 64 bits; used to index 2^N tables when N <= 64.
  [[nodiscard]] std::uint64_t low_word() const { return words_[0]; }
  static SubsetMask from_low_word(Universe u, std::uint64_t bits) {
    SubsetMask m(u);
    if (u.size() < 64) bits &= (std::uint64_t{1} << u.size()) - 1;
    m.words_[0] = bits;
    return m;
  }

  [[nodiscard]] std::string to_string() const {
    std::string s = "{";
    bool first = true;
    for (int e : elements()) {
      if (!first) s += ' ';
      s += std::to_string(e);
      first = false;
    }
    return s + "}";
  }

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;
  /// Orders by universe size, then by the mask read as a big-endian integer.
  friend std::strong_ordering operator<=>(const SubsetMask& a, const SubsetMask& b) {
    if (auto c = a.n_ <=> b.n_; c != 0) return c;
    for (std::size_t w = kMaskWords; w-- > 0;) {
      if (auto c = a.words_[w] <=> b.words_[w]; c != 0) return c;
    }
    return std::strong_ordering::equal;
  }

  // Unchecked word-wise kernels; the public free functions validate universes.
  [[nodiscard]] SubsetMask and_with(const SubsetMask& o) const {
    SubsetMask r(*this);
    for (std::size_t w = 0; w < kMaskWords; ++w) r.words_[w] &= o.words_[w];
    return r;
  }
  [[nodiscard]] SubsetMask or_with(const SubsetMask& o) const {
    SubsetMask r(*this);
    for (std::size_t w = 0; w < kMaskWords; ++w) r.words_[w] |= o.words_[w];
    return r;
  }
  [[nodiscard]] SubsetMask and_not(const SubsetMask& o) const {
    SubsetMask r(*this);
    for (std::size_t w = 0; w < kMaskWords; ++w) r.words_[w] &= ~o.words_[w];
    return r;
  }
  [[nodiscard]] bool within(const SubsetMask& o) const {
    for (std::size_t w = 0; w < kMaskWords; ++w) {
      if ((words_[w] & ~o.words_[w]) != 0) return false;
    }
    return true;
  }
  [[nodiscard]] int overlap(const SubsetMask& o) const {
    int c = 0;
    for (std::size_t w = 0; w < kMaskWords; ++w) c += std::popcount(words_[w] & o.words_[w]);
    return c;
  }

 private:
  static std::size_t word_of(int e) { return static_cast<std::size_t>(e) / 64; }
  static int bit_of(int e) { return e % 64; }
  void check_element(int e) const {
    if (e < 0 || e >= n_) {
      throw ArgumentError("element " + std::to_string(e) + " outside universe of size " +
                          std::to_string(n_));
    }
  }

  std::uint16_t n_;
  std::array<Word, kMaskWords> words_{};
};

namespace detail {
inline void require_same_universe(const SubsetMask& a, const SubsetMask& b) {
  if (a.universe_size() != b.universe_size()) {
    throw ArgumentError("universe mismatch: " + std::to_string(a.universe_size()) + " vs " +
                        std::to_string(b.universe_size()));
  }
}
}  // namespace detail

inline SubsetMask intersect(const SubsetMask& a, const SubsetMask& b) {
  detail::require_same_universe(a, b);
  return a.and_with(b);
}

inline SubsetMask unite(const SubsetMask& a, const SubsetMask& b) {
  detail::require_same_universe(a, b);
  return a.or_with(b);
}

inline SubsetMask difference(const SubsetMask& a, const SubsetMask& b) {
  detail::require_same_universe(a, b);
  return a.and_not(b);
}

inline bool is_subset(const SubsetMask& a, const SubsetMask& b) {
  detail::require_same_universe(a, b);
  return a.within(b);
}

/// Input range over all subsets of a mask. Order: binary counter over the
/// set-bit positions of the source, lowest position as least significant digit.
class SubsetRange {
 public:
  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = SubsetMask;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    const SubsetMask& operator*() const { return current_; }
    const SubsetMask* operator->() const { return &current_; }
    iterator& operator++() {
      ++index_;
      for (int pos : *positions_) {
        if (current_.contains(pos)) {
          current_.erase(pos);
        } else {
          current_.insert(pos);
          break;
        }
      }
      return *this;
    }
    void operator++(int) { ++*this; }
    friend bool operator==(const iterator& a, const iterator& b) { return a.index_ == b.index_; }

   private:
    friend class SubsetRange;
    iterator(const std::vector<int>* positions, SubsetMask start, std::uint64_t index)
        : positions_(positions), current_(start), index_(index) {}
    const std::vector<int>* positions_ = nullptr;
    SubsetMask current_{Universe(1)};
    std::uint64_t index_ = 0;
  };

  explicit SubsetRange(const SubsetMask& source)
      : positions_(source.elements()), empty_(source.universe()) {
    if (static_cast<int>(positions_.size()) > kMaxEnumeratedBits) {
      throw CapacityError("refusing to enumerate 2^" + std::to_string(positions_.size()) +
                          " subsets (limit 2^" + std::to_string(kMaxEnumeratedBits) + ")");
    }
  }
  SubsetRange(const SubsetRange&) = delete;
  SubsetRange& operator=(const SubsetRange&) = delete;

  [[nodiscard]] iterator begin() const { return iterator(&positions_, empty_, 0); }
  [[nodiscard]] iterator end() const { return iterator(&positions_, empty_, count()); }
  [[nodiscard]] std::uint64_t count() const { return std::uint64_t{1} << positions_.size(); }

 private:
  std::vector<int> positions_;
  SubsetMask empty_;
};

inline SubsetRange enumerate_subsets_of(const SubsetMask& a) { return SubsetRange(a); }

}  // namespace spreadlab

template <>
struct std::hash<spreadlab::SubsetMask> {
  std::size_t operator()(const spreadlab::SubsetMask& m) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(m.universe_size());
    for (std::uint64_t w : m.words()) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

namespace spreadlab {

/// Distinct subsets of one universe in insertion order, each of size <= max_size().
class SetFamily {
 public:
  explicit SetFamily(Universe u) : universe_(u) {}

  /// Duplicates are dropped (first occurrence kept). max_size defaults to the
  /// largest member; an explicit bound must cover every member.
  SetFamily(Universe u, const std::vector<SubsetMask>& members, std::optional<int> max_size = {})
      : universe_(u) {
    for (const auto& m : members) add(m);
    if (max_size) {
      if (*max_size < max_size_) {
        throw ArgumentError("declared max size " + std::to_string(*max_size) +
                            " smaller than a member of size " + std::to_string(max_size_));
      }
      max_size_ = *max_size;
    }
  }

  /// Returns the index of m, inserting it when new.
  std::size_t add(const SubsetMask& m) {
    if (m.universe_size() != universe_.size()) {
      throw ArgumentError("member " + m.to_string() + " belongs to a different universe");
    }
    auto [it, inserted] = index_.try_emplace(m, members_.size());
    if (inserted) {
      members_.push_back(m);
      max_size_ = std::max(max_size_, m.size());
    }
    return it->second;
  }

  [[nodiscard]] Universe universe() const { return universe_; }
  [[nodiscard]] const std::vector<SubsetMask>& members() const { return members_; }
  [[nodiscard]] std::size_t size() const { return members_.size(); }
  [[nodiscard]] bool empty() const { return members_.empty(); }
  [[nodiscard]] int max_size() const { return max_size_; }
  [[nodiscard]] const SubsetMask& operator[](std::size_t i) const { return members_[i]; }

  [[nodiscard]] std::optional<std::size_t> find(const SubsetMask& m) const {
    auto it = index_.find(m);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Copy with members in ascending mask order.
  [[nodiscard]] SetFamily sorted() const {
    auto copy = members_;
    std::sort(copy.begin(), copy.end());
    return SetFamily(universe_, copy, max_size_);
  }

 private:
  Universe universe_;
  std::vector<SubsetMask> members_;
  std::unordered_map<SubsetMask, std::size_t> index_;
  int max_size_ = 0;
};

}  // namespace spreadlab
