#include "nightbird/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

#include "nightbird/errors.hpp"

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

namespace nightbird {

namespace {

constexpr const char* kMagic = "NTCv1";

bool valid_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
    }
    return true;
}

void write_le_double(std::ostream& os, double v) {
    const auto bits = std::bit_cast<uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    os.write(bytes, 8);
}

double read_le_double(std::istream& is) {
    char bytes[8];
    is.read(bytes, 8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

}  // namespace

void TensorContainer::add(const std::string& name, Tensor t) {
    if (!valid_token(name)) throw ValidationError("TensorContainer: invalid tensor name '" + name + "'");
    if (has(name)) throw ValidationError("TensorContainer: duplicate tensor name '" + name + "'");
    tensors_.emplace_back(name, std::move(t));
}

bool TensorContainer::has(const std::string& name) const {
    for (const auto& [n, t] : tensors_) {
        if (n == name) return true;
    }
    return false;
}

const Tensor& TensorContainer::get(const std::string& name) const {
    for (const auto& [n, t] : tensors_) {
        if (n == name) return t;
    }
    throw ValidationError("TensorContainer: no tensor named '" + name + "'");
}

void TensorContainer::set_meta(const std::string& key, const std::string& value) {
    if (!valid_token(key)) throw ValidationError("TensorContainer: invalid metadata key '" + key + "'");
    for (auto& [k, v] : metadata_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    metadata_.emplace_back(key, value);
}

bool TensorContainer::has_meta(const std::string& key) const {
    for (const auto& [k, v] : metadata_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& TensorContainer::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata_) {
        if (k == key) return v;
    }
    throw ValidationError("TensorContainer: no metadata key '" + key + "'");
}

void TensorContainer::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("TensorContainer: cannot open '" + path + "' for writing");
    os << kMagic << "\n";
    for (const auto& [k, v] : metadata_) os << "meta " << k << " " << v << "\n";
    for (const auto& [name, t] : tensors_) {
        os << "tensor " << name << " " << t.rank();
        for (size_t d : t.shape) os << " " << d;
        os << "\n";
    }
    os << "end\n";
    for (const auto& [name, t] : tensors_) {
        for (double v : t.data) write_le_double(os, v);
    }
    if (!os) throw ValidationError("TensorContainer: write to '" + path + "' failed");
}

TensorContainer TensorContainer::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("TensorContainer: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != kMagic) {
        throw ValidationError("TensorContainer: '" + path + "' is not an NTC file");
    }
    TensorContainer c;
    std::vector<std::pair<std::string, Shape>> pending;
    while (std::getline(is, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            c.set_meta(key, value);
        } else if (kind == "tensor") {
            std::string name;
            size_t rank = 0;
            ls >> name >> rank;
            Shape shape(rank);
            for (size_t i = 0; i < rank; ++i) ls >> shape[i];
            if (!ls) throw ValidationError("TensorContainer: malformed tensor header '" + line + "'");
            pending.emplace_back(name, shape);
        } else {
            throw ValidationError("TensorContainer: unexpected header line '" + line + "'");
        }
    }
    for (auto& [name, shape] : pending) {
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = read_le_double(is);
        if (!is) throw ValidationError("TensorContainer: truncated data for tensor '" + name + "'");
        c.add(name, std::move(t));
    }
    return c;
}

}  // namespace nightbird
