#include "vtcc/model.hpp"

namespace vtcc {

template <typename T>
VtccModel<T> VtccModel<T>::create(const ModelConfig& config, uint64_t seed) {
    config.validate();
    SeededRng rng(seed);
    VtccModel model;
    model.config_ = config;
    const int64_t d = config.embed_dim();
    model.backbone_ = Backbone<T>::create(config, rng);
    model.instance_head_ = Projector<T>::create(d, config.projector.hidden_dim, config.projector.instance_out_dim, rng);
    model.cluster_head_ = Projector<T>::create(d, config.projector.hidden_dim, config.projector.clusters, rng);
    return model;
}

template <typename T>
ViewOutputs<T> VtccModel<T>::forward(const Tensor<T>& images, NormMode mode) {
    ViewOutputs<T> out;
    out.h = backbone_.forward(images, mode);
    out.z = instance_projector_forward(out.h, instance_head_, mode);
    out.y = cluster_projector_forward(out.h, cluster_head_, mode);
    return out;
}

template <typename T>
void VtccModel<T>::visit(ParamVisitor<T>& v) {
    backbone_.visit("backbone", v);
    instance_head_.visit("instance_head", v);
    cluster_head_.visit("cluster_head", v);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> VtccModel<T>::named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    ParamVisitor<T> v;
    v.param = [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); };
    visit(v);
    return out;
}

template <typename T>
std::vector<Tensor<T>> VtccModel<T>::parameters() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> VtccModel<T>::named_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    ParamVisitor<T> v;
    v.param = [](const std::string&, Tensor<T>&) {};
    v.buffer = [&](const std::string& name, std::vector<T>& b) { out.emplace_back(name, &b); };
    visit(v);
    return out;
}

template <typename T>
int64_t VtccModel<T>::parameter_count() {
    int64_t n = 0;
    for (auto& t : parameters()) n += t.numel();
    return n;
}

template <typename T>
void VtccModel<T>::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

template class VtccModel<float>;
template class VtccModel<double>;

}  // namespace vtcc
