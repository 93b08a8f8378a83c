#ifndef SNELL_ATOM_SET_HPP
#define SNELL_ATOM_SET_HPP

#include <cstdint>
#include <vector>

namespace snell {

/// Subset of a finite sample space, stored as a bit vector over atom indices.
class AtomSet {
public:
    AtomSet() : n_(0) {}
    explicit AtomSet(int n_atoms) : n_(n_atoms), words_((n_atoms + 63) / 64, 0) {}

    static AtomSet full(int n_atoms) {
        AtomSet s(n_atoms);
        for (int i = 0; i < n_atoms; ++i) s.insert(i);
        return s;
    }

    int universe_size() const { return n_; }

    void insert(int i) { words_[i >> 6] |= (std::uint64_t{1} << (i & 63)); }
    void erase(int i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
    bool contains(int i) const {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    bool empty() const {
        for (auto w : words_)
            if (w) return false;
        return true;
    }

    int count() const {
        int c = 0;
        for (auto w : words_) c += __builtin_popcountll(w);
        return c;
    }

    AtomSet operator&(const AtomSet& o) const { return apply(o, [](std::uint64_t a, std::uint64_t b) { return a & b; }); }
    AtomSet operator|(const AtomSet& o) const { return apply(o, [](std::uint64_t a, std::uint64_t b) { return a | b; }); }
    // set difference
    AtomSet operator-(const AtomSet& o) const { return apply(o, [](std::uint64_t a, std::uint64_t b) { return a & ~b; }); }

    AtomSet complement() const {
        AtomSet r = *this;
        for (auto& w : r.words_) w = ~w;
        r.trim();
        return r;
    }

    bool operator==(const AtomSet& o) const { return n_ == o.n_ && words_ == o.words_; }
    bool operator!=(const AtomSet& o) const { return !(*this == o); }

    bool subset_of(const AtomSet& o) const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & ~o.words_[i]) return false;
        return true;
    }

    bool intersects(const AtomSet& o) const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & o.words_[i]) return true;
        return false;
    }

    std::vector<int> members() const {
        std::vector<int> out;
        for (int i = 0; i < n_; ++i)
            if (contains(i)) out.push_back(i);
        return out;
    }

private:
    template <class F>
    AtomSet apply(const AtomSet& o, F f) const {
        AtomSet r(n_);
        for (std::size_t i = 0; i < words_.size(); ++i) r.words_[i] = f(words_[i], o.words_[i]);
        return r;
    }

    void trim() {
        int rem = n_ & 63;
        if (rem && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
    }

    int n_;
    std::vector<std::uint64_t> words_;
};

}  // namespace snell

#endif  // SNELL_ATOM_SET_HPP
