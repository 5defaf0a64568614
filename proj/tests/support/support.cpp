#include "support.hpp"

#include <atomic>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace testsupport {

namespace fs = std::filesystem;
using namespace evomerge;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("evomerge-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    const auto s = read_text(p);
    return {s.begin(), s.end()};
}

fs::path support_dir() { return EVOMERGE_TEST_SUPPORT_DIR; }

std::vector<std::string> fake_evaluator(const std::string& mode) {
    return {"python3", (support_dir() / "fake_evaluator.py").string(), mode};
}

TensorMap random_tensor_map(StreamRng& rng) {
    static constexpr DType dtypes[] = {DType::f64, DType::f32, DType::f16, DType::bf16};
    TensorMap m;
    const auto n = rng.below(6);
    for (std::uint64_t t = 0; t < n; ++t) {
        std::string name;
        const auto len = 1 + rng.below(12);
        for (std::uint64_t k = 0; k < len; ++k) name += "abcxyz._0123"[rng.below(12)];
        Shape shape(rng.below(4));
        for (auto& d : shape) d = rng.below(5);  // zero extents allowed
        Tensor tensor;
        tensor.dtype = dtypes[rng.below(4)];
        tensor.shape = shape;
        tensor.data.resize(element_count(shape) * dtype_size(tensor.dtype));
        for (auto& b : tensor.data) b = static_cast<std::uint8_t>(rng.below(256));
        m.entries[name] = std::move(tensor);
    }
    if (rng.below(2)) m.metadata["note"] = "k" + std::to_string(rng.below(1000));
    return m;
}

TensorMap random_model(StreamRng& rng, const std::vector<Shape>& shapes) {
    TensorMap m;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        std::vector<double> v(element_count(shapes[i]));
        for (auto& x : v) x = 2.0 * rng.uniform() - 1.0;
        m.entries.emplace("t" + std::to_string(i), Tensor::from_f64(DType::f32, shapes[i], v));
    }
    return m;
}

TensorMap single(const std::string& name, std::vector<double> v, DType dtype) {
    TensorMap m;
    const Shape shape{v.size()};
    m.entries.emplace(name, Tensor::from_f64(dtype, shape, v));
    return m;
}

std::vector<double> values(const TensorMap& m, const std::string& name) { return m.at(name).to_f64(); }

double normal(StreamRng& rng) {
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * rng.uniform());
}

IrtWorld make_irt_world(std::size_t n_items, std::size_t n_anchors, std::uint64_t seed) {
    IrtWorld w;
    StreamRng rng(seed, hash_string("irt-world"));
    for (std::size_t i = 0; i < n_items; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "q%04zu", i);
        IrtItem item;
        item.a = 0.5 + 1.5 * rng.uniform();
        item.b = -2.0 + 4.0 * rng.uniform();
        w.bank.items.emplace(id, item);
        w.ids.emplace_back(id);
    }
    w.bank.anchor_ids = most_informative(w.bank.items, n_anchors);
    return w;
}

std::vector<bool> sample_responses(const IrtWorld& world, double theta, StreamRng& rng) {
    std::vector<bool> out;
    out.reserve(world.ids.size());
    for (const auto& id : world.ids) out.push_back(rng.uniform() < irt_prob(theta, world.bank.items.at(id)));
    return out;
}

EvalRecord anchor_record(const IrtWorld& world, const std::vector<bool>& all) {
    std::map<std::string, bool> by_id;
    for (std::size_t i = 0; i < world.ids.size(); ++i) by_id[world.ids[i]] = all[i];
    std::vector<std::string> ids;
    std::vector<bool> bits;
    for (const auto& id : world.bank.anchor_ids) {
        ids.push_back(id);
        bits.push_back(by_id.at(id));
    }
    return EvalRecord::from_bits(ids, bits);
}

EvalRecord full_record(const IrtWorld& world, const std::vector<bool>& all) {
    return EvalRecord::from_bits(world.ids, all);
}

double mean(const std::vector<bool>& bits) {
    double s = 0;
    for (bool b : bits) s += b ? 1.0 : 0.0;
    return bits.empty() ? 0.0 : s / static_cast<double>(bits.size());
}

}  // namespace testsupport
