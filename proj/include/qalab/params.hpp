#pragma once

// Named trainable parameters shared by the encoder, post-encoders and heads.
// The registry owns the canonical ordering used by the optimizer and the
// checkpoint writer.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "qalab/tensor.hpp"

namespace qalab {

struct Param {
    std::string name;
    Tensor value;
    bool decay{true};  // false for biases and layer-norm gains/biases
};

class ParamRegistry {
public:
    // registers and returns a new trainable tensor; names must be unique
    Tensor add(const std::string& name, Tensor t, bool decay = true);
    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::size_t total_values() const;

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

// checkpoint I/O: flat binary of named arrays + JSON manifest (name/shape/offset)
void save_checkpoint(const ParamRegistry& reg, const std::string& bin_path,
                     const std::string& manifest_path);
void load_checkpoint(ParamRegistry& reg, const std::string& bin_path,
                     const std::string& manifest_path);

}  // namespace qalab
