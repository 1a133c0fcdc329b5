#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nightbird/tensor.hpp"

namespace nightbird {

/// Named-tensor container file ("NTC"): a plain-text header listing metadata
/// and (name, shape) entries followed by the raw values of every tensor in
/// declaration order as little-endian IEEE-754 doubles. See docs/formats.md.
class TensorContainer {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;

    void set_meta(const std::string& key, const std::string& value);
    bool has_meta(const std::string& key) const;
    const std::string& meta(const std::string& key) const;

    const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }
    const std::vector<std::pair<std::string, std::string>>& metadata() const { return metadata_; }

    void save(const std::string& path) const;
    static TensorContainer load(const std::string& path);

private:
    std::vector<std::pair<std::string, std::string>> metadata_;
    std::vector<std::pair<std::string, Tensor>> tensors_;
};

}  // namespace nightbird
