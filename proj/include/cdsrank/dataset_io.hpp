#ifndef CDSRANK_DATASET_IO_HPP
#define CDSRANK_DATASET_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdsrank/affinity.hpp"
#include "cdsrank/rerank.hpp"

namespace cdsrank {

// A labelled feature collection; any item can serve as probe or gallery.
struct GalleryIndex {
    std::vector<FeatureVector> items;

    int size() const { return static_cast<int>(items.size()); }
    int dim() const { return items.empty() ? 0 : static_cast<int>(items[0].dim()); }
};

// CSV layout: header `id,camera,f0,f1,...`; camera may be empty. Values are
// written with 17 significant digits so write -> read round-trips exactly.
GalleryIndex load_features_csv(const std::string& path);
void write_features_csv(const std::string& path, const GalleryIndex& index);

// Binary layout, little-endian: magic "DCDS", u32 version = 1, u32 count,
// u32 dim, then per item u16 id length + UTF-8 id bytes, i32 camera
// (-1 = absent), dim * f32 features. Features are f32 on disk, f64 in memory.
GalleryIndex load_features_bin(const std::string& path);
void write_features_bin(const std::string& path, const GalleryIndex& index);

// Dispatch on the leading magic bytes: binary if the file starts with
// "DCDS", CSV otherwise.
GalleryIndex load_features(const std::string& path);

// A mini-batch of k identities with omega images each, grouped by identity,
// so M = k * omega and a target matrix over it is block diagonal.
struct Batch {
    std::vector<FeatureVector> members;
    int k = 0;
    int omega = 0;
};

// Seeded sampler: k identities (each having at least omega images), omega
// images per identity, grouped by identity. Identical seeds give identical
// batches bit for bit.
Batch build_batch(const GalleryIndex& index, int k, int omega, std::uint64_t seed);

// Binary same-identity matrix: 1 iff the two batch members share an id.
// Symmetric with a unit diagonal.
Eigen::MatrixXi build_target_matrix(const Batch& batch);

// Synthetic gallery: per identity a unit-norm centroid drawn uniformly on
// the sphere, each image = centroid + Gaussian(0, intra_noise * I)
// renormalized; cameras alternate 0/1 round-robin within an identity.
GalleryIndex synth_generate(int num_ids, int per_id, int dim, double intra_noise,
                            std::uint64_t seed);

// Verification scores on disk: either `<path>.json` holding {"S":[[..]],
// "D":[[..]]} or a pair `<path>_s.csv` / `<path>_d.csv` of headerless CSV
// matrices. Both matrices must be square and of equal size.
VerificationScores load_scores(const std::string& path);
void write_scores(const std::string& path, const VerificationScores& scores);

// Rankings as JSON lines, one object per probe:
//   {"probe": i, "order": [...], "scores": [...]}
// Keys are emitted in that order and floats with shortest round-trip
// formatting, so write -> load -> write is byte identical.
void write_ranking(std::ostream& out, const std::vector<RankedList>& lists);
void write_ranking(const std::string& path, const std::vector<RankedList>& lists);
std::vector<RankedList> load_ranking(const std::string& path);

}  // namespace cdsrank

#endif
