#pragma once

// Backbone plus both projectors, with named parameter access.

#include <string>
#include <utility>
#include <vector>

#include "vtcc/backbone.hpp"
#include "vtcc/heads.hpp"

namespace vtcc {

template <typename T>
struct ViewOutputs {
    Tensor<T> h;  // [N×d]
    Tensor<T> z;  // [N×instance_out]
    Tensor<T> y;  // [N×K], rows are probabilities
};

template <typename T>
class VtccModel {
   public:
    // Initialization draws from SeededRng(seed) in parameter order.
    static VtccModel create(const ModelConfig& config, uint64_t seed);

    VtccModel(VtccModel&&) noexcept = default;
    VtccModel& operator=(VtccModel&&) noexcept = default;
    // Tensors are shared handles; an implicit copy would alias parameters.
    VtccModel(const VtccModel&) = delete;
    VtccModel& operator=(const VtccModel&) = delete;

    ViewOutputs<T> forward(const Tensor<T>& images, NormMode mode);

    void visit(ParamVisitor<T>& v);
    std::vector<std::pair<std::string, Tensor<T>>> named_parameters();
    std::vector<Tensor<T>> parameters();
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers();
    int64_t parameter_count();
    void zero_grad();

    const ModelConfig& config() const { return config_; }
    Backbone<T>& backbone() { return backbone_; }
    Projector<T>& instance_head() { return instance_head_; }
    Projector<T>& cluster_head() { return cluster_head_; }

   private:
    VtccModel() = default;

    ModelConfig config_;
    Backbone<T> backbone_;
    Projector<T> instance_head_;
    Projector<T> cluster_head_;
};

}  // namespace vtcc
