#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dra {

// Flat parameter storage with named, ordered blocks. The trainer keeps
// gradient and optimizer-moment buffers as plain vectors of the same total
// length, so one layout object serves all of them.
class ParamStore {
public:
    struct Block {
        std::string name;
        std::vector<std::size_t> dims;
        std::size_t offset = 0;
        std::size_t len = 0;
    };

    std::size_t add(const std::string& name, std::vector<std::size_t> dims) {
        std::size_t len = 1;
        for (std::size_t d : dims) len *= d;
        Block b{name, std::move(dims), values_.size(), len};
        values_.resize(values_.size() + len, 0.0);
        blocks_.push_back(std::move(b));
        return blocks_.size() - 1;
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t total() const { return values_.size(); }

    bool has(const std::string& name) const { return find_index(name) != npos; }

    const Block& block(const std::string& name) const {
        std::size_t i = find_index(name);
        if (i == npos) throw std::out_of_range("no parameter block named '" + name + "'");
        return blocks_[i];
    }

    std::span<double> view(const std::string& name) {
        const Block& b = block(name);
        return {values_.data() + b.offset, b.len};
    }
    std::span<const double> view(const std::string& name) const {
        const Block& b = block(name);
        return {values_.data() + b.offset, b.len};
    }
    std::span<double> view(const Block& b) { return {values_.data() + b.offset, b.len}; }
    std::span<const double> view(const Block& b) const { return {values_.data() + b.offset, b.len}; }

    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::size_t find_index(const std::string& name) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (blocks_[i].name == name) return i;
        return npos;
    }

    std::vector<Block> blocks_;
    std::vector<double> values_;
};

} // namespace dra
