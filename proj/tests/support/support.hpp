#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evomerge/checkpoint_io.hpp"
#include "evomerge/estimators.hpp"
#include "evomerge/philox.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);

// Directory with fake_evaluator.py.
std::filesystem::path support_dir();
std::vector<std::string> fake_evaluator(const std::string& mode);

// Random names, shapes (including zero extents), dtypes and payloads.
evomerge::TensorMap random_tensor_map(evomerge::StreamRng& rng);

// Two tensors in f32 with values in [-1, 1]; same layout for every call with
// the same shapes.
evomerge::TensorMap random_model(evomerge::StreamRng& rng, const std::vector<evomerge::Shape>& shapes);

evomerge::TensorMap single(const std::string& name, std::vector<double> values,
                           evomerge::DType dtype = evomerge::DType::f64);
std::vector<double> values(const evomerge::TensorMap& m, const std::string& name);

double normal(evomerge::StreamRng& rng);

// 2PL world: a ~ U[0.5, 2], b ~ U[-2, 2]. The anchors are the most
// informative items of the true bank.
struct IrtWorld {
    evomerge::ItemBank bank;
    std::vector<std::string> ids;  // bank order
};
IrtWorld make_irt_world(std::size_t n_items, std::size_t n_anchors, std::uint64_t seed);

// Bernoulli draw of every bank item at ability theta.
std::vector<bool> sample_responses(const IrtWorld& world, double theta, evomerge::StreamRng& rng);
evomerge::EvalRecord anchor_record(const IrtWorld& world, const std::vector<bool>& all);
evomerge::EvalRecord full_record(const IrtWorld& world, const std::vector<bool>& all);
double mean(const std::vector<bool>& bits);

}  // namespace testsupport
