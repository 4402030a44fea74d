#include "qalab/params.hpp"

#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace qalab {

Tensor ParamRegistry::add(const std::string& name, Tensor t, bool decay) {
    if (index_.count(name))
        throw std::invalid_argument("parameter already registered: " + name);
    t->requires_grad = true;
    index_[name] = params_.size();
    params_.push_back({name, t, decay});
    return t;
}

Tensor ParamRegistry::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("unknown parameter: " + name);
    return params_[it->second].value;
}

bool ParamRegistry::contains(const std::string& name) const {
    return index_.count(name) > 0;
}

std::size_t ParamRegistry::total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value->numel();
    return n;
}

void save_checkpoint(const ParamRegistry& reg, const std::string& bin_path,
                     const std::string& manifest_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open checkpoint for writing: " + bin_path);
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : reg.params()) {
        bin.write(reinterpret_cast<const char*>(p.value->data.data()),
                  static_cast<std::streamsize>(p.value->numel() * sizeof(double)));
        manifest.push_back({{"name", p.name},
                            {"shape", p.value->shape},
                            {"offset", offset},
                            {"count", p.value->numel()}});
        offset += p.value->numel() * sizeof(double);
    }
    if (!bin) throw std::runtime_error("checkpoint write failed: " + bin_path);
    std::ofstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open manifest for writing: " + manifest_path);
    mf << manifest.dump(2) << "\n";
}

void load_checkpoint(ParamRegistry& reg, const std::string& bin_path,
                     const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open manifest: " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open checkpoint: " + bin_path);
    for (const auto& entry : manifest) {
        std::string name = entry.at("name");
        if (!reg.contains(name))
            throw std::runtime_error("checkpoint parameter not in model: " + name);
        Tensor t = reg.get(name);
        auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != t->shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        bin.read(reinterpret_cast<char*>(t->data.data()),
                 static_cast<std::streamsize>(t->numel() * sizeof(double)));
        if (!bin) throw std::runtime_error("checkpoint read failed for " + name);
    }
}

}  // namespace qalab
