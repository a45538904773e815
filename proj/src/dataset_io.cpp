#include "cdsrank/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cdsrank/errors.hpp"
#include "cdsrank/rng.hpp"

namespace cdsrank {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'D', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& field, const std::string& path, long line) {
    if (field.empty()) throw IoError(IoCode::parse_error, path, "empty numeric field", line);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size())
        throw IoError(IoCode::parse_error, path, "not a number: '" + field + "'", line);
    if (!std::isfinite(v))
        throw IoError(IoCode::parse_error, path, "non-finite feature value: '" + field + "'",
                      line);
    return v;
}

int parse_camera_field(const std::string& field, const std::string& path, long line) {
    char* end = nullptr;
    const long v = std::strtol(field.c_str(), &end, 10);
    if (field.empty() || end != field.c_str() + field.size())
        throw IoError(IoCode::parse_error, path, "bad camera label: '" + field + "'", line);
    return static_cast<int>(v);
}

// Little-endian primitives; written bytewise so the on-disk layout does not
// depend on host endianness.
void put_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class BinReader {
public:
    BinReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IoError(IoCode::truncated, path_, "unexpected end of file");
        return s;
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::uint32_t byte() {
        const int c = in_.get();
        if (c == EOF) throw IoError(IoCode::truncated, path_, "unexpected end of file");
        return static_cast<std::uint32_t>(c);
    }

    std::istream& in_;
    std::string path_;
};

void validate_index(const GalleryIndex& index, const std::string& context) {
    if (index.items.empty()) throw std::invalid_argument(context + ": empty dataset");
    const Eigen::Index d = index.items[0].dim();
    for (std::size_t i = 0; i < index.items.size(); ++i) {
        const auto& item = index.items[i];
        if (item.id.empty())
            throw std::invalid_argument(context + ": empty id at item " + std::to_string(i));
        if (item.dim() != d)
            throw std::invalid_argument(context + ": dimension mismatch at item " +
                                        std::to_string(i));
        if (!item.values.allFinite())
            throw std::invalid_argument(context + ": non-finite feature at item " +
                                        std::to_string(i));
    }
}

Eigen::MatrixXd load_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");

    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_double_field(f, path, lineno));
        if (!rows.empty() && rows[0].size() != row.size())
            throw IoError(IoCode::shape_mismatch, path,
                          "row has " + std::to_string(row.size()) + " columns, expected " +
                              std::to_string(rows[0].size()),
                          lineno);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError(IoCode::empty_dataset, path, "empty matrix");

    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw IoError(IoCode::open_failed, path, "cannot open file for writing");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError(IoCode::write_failed, path, "write failed");
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& path,
                                 const std::string& key) {
    if (!j.contains(key) || !j[key].is_array())
        throw IoError(IoCode::parse_error, path, "missing matrix '" + key + "'");
    const auto& rows = j[key];
    if (rows.empty()) throw IoError(IoCode::empty_dataset, path, "empty matrix '" + key + "'");

    const std::size_t cols = rows[0].size();
    Eigen::MatrixXd m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || rows[i].size() != cols)
            throw IoError(IoCode::shape_mismatch, path, "ragged matrix '" + key + "'");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!rows[i][c].is_number())
                throw IoError(IoCode::parse_error, path, "non-numeric entry in '" + key + "'");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                rows[i][c].get<double>();
        }
    }
    return m;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_scores_shape(const VerificationScores& v, const std::string& path) {
    if (v.s.rows() != v.s.cols() || v.d.rows() != v.d.cols() || v.s.rows() != v.d.rows())
        throw IoError(IoCode::shape_mismatch, path,
                      "similarity and dissimilarity matrices must be square and equally sized");
    if (!v.s.allFinite() || !v.d.allFinite())
        throw IoError(IoCode::parse_error, path, "scores must be finite");
}

}  // namespace

GalleryIndex load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");

    std::string line;
    if (!std::getline(in, line)) throw IoError(IoCode::empty_dataset, path, "empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "camera")
        throw IoError(IoCode::parse_error, path, "header must start with 'id,camera,f0,...'", 1);
    const std::size_t dim = header.size() - 2;
    for (std::size_t i = 0; i < dim; ++i)
        if (header[i + 2] != "f" + std::to_string(i))
            throw IoError(IoCode::parse_error, path,
                          "bad feature column name '" + header[i + 2] + "'", 1);

    GalleryIndex index;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw IoError(IoCode::shape_mismatch, path,
                          "row has " + std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()),
                          lineno);

        FeatureVector item;
        item.id = fields[0];
        if (item.id.empty()) throw IoError(IoCode::parse_error, path, "empty id", lineno);
        if (!fields[1].empty()) item.camera = parse_camera_field(fields[1], path, lineno);
        item.values.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < dim; ++i)
            item.values(static_cast<Eigen::Index>(i)) =
                parse_double_field(fields[i + 2], path, lineno);
        index.items.push_back(std::move(item));
    }
    if (index.items.empty()) throw IoError(IoCode::empty_dataset, path, "no data rows");
    return index;
}

void write_features_csv(const std::string& path, const GalleryIndex& index) {
    validate_index(index, "write_features_csv");
    std::ofstream out(path);
    if (!out) throw IoError(IoCode::open_failed, path, "cannot open file for writing");

    out << "id,camera";
    for (int i = 0; i < index.dim(); ++i) out << ",f" << i;
    out << '\n';
    for (const auto& item : index.items) {
        if (item.id.find(',') != std::string::npos || item.id.find('\n') != std::string::npos)
            throw IoError(IoCode::write_failed, path, "id contains a CSV delimiter: " + item.id);
        out << item.id << ',';
        if (item.camera) out << *item.camera;
        for (Eigen::Index i = 0; i < item.dim(); ++i) out << ',' << format_double(item.values(i));
        out << '\n';
    }
    if (!out) throw IoError(IoCode::write_failed, path, "write failed");
}

GalleryIndex load_features_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");
    BinReader r(in, path);

    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw IoError(IoCode::bad_magic, path, "not a DCDS feature file");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw IoError(IoCode::version_mismatch, path,
                      "unsupported format version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    if (count == 0) throw IoError(IoCode::empty_dataset, path, "empty dataset");
    const std::uint32_t dim = r.u32();
    if (dim == 0) throw IoError(IoCode::parse_error, path, "zero feature dimension");

    GalleryIndex index;
    index.items.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureVector item;
        const std::uint16_t id_len = r.u16();
        item.id = r.bytes(id_len);
        if (item.id.empty())
            throw IoError(IoCode::parse_error, path, "empty id at item " + std::to_string(i));
        const std::int32_t camera = r.i32();
        if (camera >= 0) item.camera = camera;
        item.values.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
            const float v = r.f32();
            if (!std::isfinite(v))
                throw IoError(IoCode::parse_error, path,
                              "non-finite feature at item " + std::to_string(i));
            item.values(d) = static_cast<double>(v);
        }
        index.items.push_back(std::move(item));
    }
    if (!r.at_eof()) throw IoError(IoCode::parse_error, path, "trailing data after last item");
    return index;
}

void write_features_bin(const std::string& path, const GalleryIndex& index) {
    validate_index(index, "write_features_bin");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(IoCode::open_failed, path, "cannot open file for writing");

    out.write(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(index.items.size()));
    put_u32(out, static_cast<std::uint32_t>(index.dim()));
    for (const auto& item : index.items) {
        if (item.id.size() > 0xffff)
            throw IoError(IoCode::write_failed, path, "id longer than 65535 bytes");
        put_u16(out, static_cast<std::uint16_t>(item.id.size()));
        out.write(item.id.data(), static_cast<std::streamsize>(item.id.size()));
        put_i32(out, item.camera ? *item.camera : -1);
        for (Eigen::Index i = 0; i < item.dim(); ++i)
            put_f32(out, static_cast<float>(item.values(i)));
    }
    if (!out) throw IoError(IoCode::write_failed, path, "write failed");
}

GalleryIndex load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");
    char head[4] = {0, 0, 0, 0};
    in.read(head, 4);
    in.close();
    if (in.gcount() == 4 && std::memcmp(head, kMagic, 4) == 0) return load_features_bin(path);
    return load_features_csv(path);
}

Batch build_batch(const GalleryIndex& index, int k, int omega, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("build_batch: k must be >= 1");
    if (omega < 1) throw std::invalid_argument("build_batch: omega must be >= 1");
    validate_index(index, "build_batch");

    // Identities in first-appearance order, with their item indices.
    std::vector<std::string> ids;
    std::map<std::string, std::vector<int>> groups;
    for (int i = 0; i < index.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(index.items[i].id);
        if (inserted) ids.push_back(index.items[i].id);
        it->second.push_back(i);
    }

    std::vector<std::string> eligible;
    for (const auto& id : ids)
        if (static_cast<int>(groups[id].size()) >= omega) eligible.push_back(id);
    if (static_cast<int>(eligible.size()) < k)
        throw std::invalid_argument("build_batch: need " + std::to_string(k) +
                                    " identities with >= " + std::to_string(omega) +
                                    " images, found " + std::to_string(eligible.size()));

    Rng rng(seed);
    rng.partial_shuffle(eligible, static_cast<std::size_t>(k));

    Batch batch;
    batch.k = k;
    batch.omega = omega;
    batch.members.reserve(static_cast<std::size_t>(k) * omega);
    for (int g = 0; g < k; ++g) {
        std::vector<int> pool = groups[eligible[g]];
        rng.partial_shuffle(pool, static_cast<std::size_t>(omega));
        for (int j = 0; j < omega; ++j) batch.members.push_back(index.items[pool[j]]);
    }
    return batch;
}

Eigen::MatrixXi build_target_matrix(const Batch& batch) {
    const int m = static_cast<int>(batch.members.size());
    if (m == 0) throw std::invalid_argument("build_target_matrix: empty batch");
    Eigen::MatrixXi g(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            g(i, j) = batch.members[i].id == batch.members[j].id ? 1 : 0;
    return g;
}

GalleryIndex synth_generate(int num_ids, int per_id, int dim, double intra_noise,
                            std::uint64_t seed) {
    if (num_ids < 2) throw std::invalid_argument("synth_generate: num_ids must be >= 2");
    if (per_id < 2) throw std::invalid_argument("synth_generate: per_id must be >= 2");
    if (dim < 2) throw std::invalid_argument("synth_generate: dim must be >= 2");
    if (intra_noise < 0.0) throw std::invalid_argument("synth_generate: intra_noise must be >= 0");

    Rng rng(seed);
    auto unit_gaussian_vector = [&](const Eigen::VectorXd* base, double scale) {
        Eigen::VectorXd v(dim);
        double norm = 0.0;
        do {
            for (int i = 0; i < dim; ++i) v(i) = rng.gaussian() * scale;
            if (base) v += *base;
            norm = v.norm();
        } while (norm < 1e-12);
        return Eigen::VectorXd(v / norm);
    };

    GalleryIndex index;
    index.items.reserve(static_cast<std::size_t>(num_ids) * per_id);
    for (int id = 0; id < num_ids; ++id) {
        const Eigen::VectorXd centroid = unit_gaussian_vector(nullptr, 1.0);
        for (int j = 0; j < per_id; ++j) {
            FeatureVector item;
            item.id = std::to_string(id);
            item.camera = j % 2;
            if (intra_noise == 0.0)
                item.values = centroid;
            else
                item.values = unit_gaussian_vector(&centroid, intra_noise);
            index.items.push_back(std::move(item));
        }
    }
    return index;
}

VerificationScores load_scores(const std::string& path) {
    if (ends_with(path, ".json")) {
        std::ifstream in(path);
        if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(IoCode::parse_error, path, e.what());
        }
        VerificationScores v{matrix_from_json(j, path, "S"), matrix_from_json(j, path, "D")};
        check_scores_shape(v, path);
        return v;
    }
    VerificationScores v{load_csv_matrix(path + "_s.csv"), load_csv_matrix(path + "_d.csv")};
    check_scores_shape(v, path);
    return v;
}

void write_scores(const std::string& path, const VerificationScores& scores) {
    check_scores_shape(scores, path);
    if (ends_with(path, ".json")) {
        nlohmann::ordered_json j;
        auto to_rows = [](const Eigen::MatrixXd& m) {
            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                nlohmann::ordered_json row = nlohmann::ordered_json::array();
                for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
                rows.push_back(std::move(row));
            }
            return rows;
        };
        j["S"] = to_rows(scores.s);
        j["D"] = to_rows(scores.d);
        std::ofstream out(path);
        if (!out) throw IoError(IoCode::open_failed, path, "cannot open file for writing");
        out << j.dump() << '\n';
        if (!out) throw IoError(IoCode::write_failed, path, "write failed");
        return;
    }
    write_csv_matrix(path + "_s.csv", scores.s);
    write_csv_matrix(path + "_d.csv", scores.d);
}

void write_ranking(std::ostream& out, const std::vector<RankedList>& lists) {
    for (const auto& list : lists) {
        nlohmann::ordered_json j;
        j["probe"] = list.probe;
        j["order"] = list.order;
        j["scores"] = list.scores;
        out << j.dump() << '\n';
    }
}

void write_ranking(const std::string& path, const std::vector<RankedList>& lists) {
    std::ofstream out(path);
    if (!out) throw IoError(IoCode::open_failed, path, "cannot open file for writing");
    write_ranking(out, lists);
    if (!out) throw IoError(IoCode::write_failed, path, "write failed");
}

std::vector<RankedList> load_ranking(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoCode::open_failed, path, "cannot open file");

    std::vector<RankedList> lists;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(IoCode::parse_error, path, e.what(), lineno);
        }
        if (!j.contains("probe") || !j.contains("order") || !j.contains("scores"))
            throw IoError(IoCode::parse_error, path, "missing probe/order/scores key", lineno);
        RankedList list;
        list.probe = j["probe"].get<int>();
        list.order = j["order"].get<std::vector<int>>();
        list.scores = j["scores"].get<std::vector<double>>();
        if (list.order.size() != list.scores.size())
            throw IoError(IoCode::shape_mismatch, path, "order/scores length mismatch", lineno);
        lists.push_back(std::move(list));
    }
    if (lists.empty()) throw IoError(IoCode::empty_dataset, path, "no ranking lines");
    return lists;
}

}  // namespace cdsrank
