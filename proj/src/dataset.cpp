#include "sumgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sumgan/binio.hpp"
#include "sumgan/rng.hpp"

namespace sumgan::data {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kDataMagic[8] = {'S', 'G', 'A', 'E', 'D', 'D', 'S', '1'};

enum class Dtype : std::uint8_t { f64 = 0, i32 = 1 };

void write_array_header(std::ostream& os, const std::string& name, Dtype dt,
                        std::span<const std::uint32_t> dims) {
    io::write_string(os, name);
    io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(dt));
    io::write_u32(os, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) io::write_u32(os, d);
}

struct RawArray {
    std::string name;
    Dtype dtype = Dtype::f64;
    std::vector<std::uint32_t> dims;
    std::vector<double> f64s;
    std::vector<std::int32_t> i32s;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

RawArray read_raw_array(std::istream& is) {
    RawArray a;
    a.name = io::read_string(is, "array name");
    a.dtype = static_cast<Dtype>(io::read_pod<std::uint8_t>(is, "array dtype"));
    const std::uint32_t ndim = io::read_u32(is, "array rank");
    a.dims.resize(ndim);
    for (auto& d : a.dims) d = io::read_u32(is, "array dim");
    const std::size_t n = a.count();
    if (a.dtype == Dtype::f64) {
        a.f64s.resize(n);
        for (auto& v : a.f64s) v = io::read_f64(is, "array data");
    } else {
        a.i32s.resize(n);
        for (auto& v : a.i32s) v = io::read_i32(is, "array data");
    }
    return a;
}

void write_record(std::ostream& os, const VideoRecord& r) {
    io::write_string(os, r.id);
    std::uint32_t n_arrays = 4;
    if (!r.gt_frame_scores.empty()) ++n_arrays;
    if (!r.user_summaries.empty()) ++n_arrays;
    io::write_u32(os, n_arrays);

    {
        const std::uint32_t dims[] = {static_cast<std::uint32_t>(r.n_frames),
                                      static_cast<std::uint32_t>(r.feature_dim)};
        write_array_header(os, "features", Dtype::f64, dims);
        for (double v : r.features) io::write_f64(os, v);
    }
    {
        const std::uint32_t dims[] = {1};
        write_array_header(os, "n_frames_original", Dtype::i32, dims);
        io::write_i32(os, r.n_frames_original);
    }
    {
        const std::uint32_t dims[] = {static_cast<std::uint32_t>(r.picks.size())};
        write_array_header(os, "picks", Dtype::i32, dims);
        for (auto v : r.picks) io::write_i32(os, v);
    }
    {
        const std::uint32_t dims[] = {static_cast<std::uint32_t>(r.change_points.size()), 2};
        write_array_header(os, "change_points", Dtype::i32, dims);
        for (const auto& cp : r.change_points) {
            io::write_i32(os, cp[0]);
            io::write_i32(os, cp[1]);
        }
    }
    if (!r.gt_frame_scores.empty()) {
        const std::uint32_t dims[] = {static_cast<std::uint32_t>(r.gt_frame_scores.size())};
        write_array_header(os, "gt_frame_scores", Dtype::f64, dims);
        for (double v : r.gt_frame_scores) io::write_f64(os, v);
    }
    if (!r.user_summaries.empty()) {
        const std::uint32_t dims[] = {
            static_cast<std::uint32_t>(r.user_summaries.size()),
            static_cast<std::uint32_t>(r.n_frames_original)};
        write_array_header(os, "user_summaries", Dtype::i32, dims);
        for (const auto& row : r.user_summaries) {
            for (auto v : row) io::write_i32(os, v);
        }
    }
}

VideoRecord read_record(std::istream& is, const std::string& expect_id) {
    VideoRecord r;
    r.id = io::read_string(is, "video id");
    if (r.id != expect_id) {
        throw ValidationError("data file video id '" + r.id +
                              "' does not match manifest entry '" + expect_id + "'");
    }
    const std::uint32_t n_arrays = io::read_u32(is, "array count");
    for (std::uint32_t k = 0; k < n_arrays; ++k) {
        RawArray a = read_raw_array(is);
        if (a.name == "features") {
            if (a.dtype != Dtype::f64 || a.dims.size() != 2) {
                throw ValidationError(r.id + ": features must be a rank-2 f64 array");
            }
            r.n_frames = a.dims[0];
            r.feature_dim = a.dims[1];
            r.features = std::move(a.f64s);
        } else if (a.name == "n_frames_original") {
            if (a.dtype != Dtype::i32 || a.count() != 1) {
                throw ValidationError(r.id + ": bad n_frames_original array");
            }
            r.n_frames_original = a.i32s[0];
        } else if (a.name == "picks") {
            if (a.dtype != Dtype::i32) throw ValidationError(r.id + ": picks must be i32");
            r.picks = std::move(a.i32s);
        } else if (a.name == "change_points") {
            if (a.dtype != Dtype::i32 || a.dims.size() != 2 || a.dims[1] != 2) {
                throw ValidationError(r.id + ": change_points must be [C x 2] i32");
            }
            r.change_points.resize(a.dims[0]);
            for (std::size_t i = 0; i < r.change_points.size(); ++i) {
                r.change_points[i] = {a.i32s[2 * i], a.i32s[2 * i + 1]};
            }
        } else if (a.name == "gt_frame_scores") {
            if (a.dtype != Dtype::f64) {
                throw ValidationError(r.id + ": gt_frame_scores must be f64");
            }
            r.gt_frame_scores = std::move(a.f64s);
        } else if (a.name == "user_summaries") {
            if (a.dtype != Dtype::i32 || a.dims.size() != 2) {
                throw ValidationError(r.id + ": user_summaries must be [U x n] i32");
            }
            r.user_summaries.resize(a.dims[0]);
            for (std::size_t u = 0; u < a.dims[0]; ++u) {
                r.user_summaries[u].assign(a.i32s.begin() + u * a.dims[1],
                                           a.i32s.begin() + (u + 1) * a.dims[1]);
            }
        } else {
            throw ValidationError(r.id + ": unknown array '" + a.name + "'");
        }
    }
    return r;
}

std::string data_file_name(const std::string& manifest_path) {
    fs::path p(manifest_path);
    p.replace_extension(".data");
    return p.filename().string();
}

}  // namespace

MetricProtocol protocol_from_string(const std::string& s) {
    if (s == "fscore_max") return MetricProtocol::fscore_max;
    if (s == "fscore_avg") return MetricProtocol::fscore_avg;
    if (s == "auc") return MetricProtocol::auc;
    throw ConfigError("unknown metric protocol '" + s +
                      "' (expected fscore_max, fscore_avg or auc)");
}

const char* to_string(MetricProtocol p) {
    switch (p) {
        case MetricProtocol::fscore_max: return "fscore_max";
        case MetricProtocol::fscore_avg: return "fscore_avg";
        case MetricProtocol::auc: return "auc";
    }
    return "?";
}

void VideoRecord::validate() const {
    auto fail = [this](const std::string& field, const std::string& why) {
        throw ValidationError("video '" + id + "', field " + field + ": " + why);
    };
    if (id.empty()) throw ValidationError("video with empty id");
    if (n_frames == 0) fail("features", "no frames");
    if (feature_dim == 0) fail("features", "zero feature dim");
    if (features.size() != n_frames * feature_dim) fail("features", "size mismatch");
    for (double v : features) {
        if (!std::isfinite(v)) fail("features", "non-finite value");
    }
    if (n_frames_original <= 0) fail("n_frames_original", "must be positive");

    if (picks.size() != n_frames) fail("picks", "length must equal frame count");
    for (std::size_t i = 0; i < picks.size(); ++i) {
        if (picks[i] < 0 || picks[i] >= n_frames_original) {
            fail("picks", "index out of range");
        }
        if (i > 0 && picks[i] <= picks[i - 1]) fail("picks", "not strictly increasing");
    }

    if (change_points.empty()) fail("change_points", "empty");
    std::int32_t cursor = 0;
    for (const auto& cp : change_points) {
        if (cp[0] != cursor) fail("change_points", "gap or overlap at " + std::to_string(cp[0]));
        if (cp[1] <= cp[0]) fail("change_points", "empty or inverted shot");
        cursor = cp[1];
    }
    if (cursor != n_frames_original) fail("change_points", "does not cover the frame range");

    if (!gt_frame_scores.empty()) {
        if (gt_frame_scores.size() != static_cast<std::size_t>(n_frames_original)) {
            fail("gt_frame_scores", "length must equal n_frames_original");
        }
        for (double v : gt_frame_scores) {
            if (!(v >= 0.0 && v <= 1.0)) fail("gt_frame_scores", "value outside [0, 1]");
        }
    }
    for (const auto& row : user_summaries) {
        if (row.size() != static_cast<std::size_t>(n_frames_original)) {
            fail("user_summaries", "row length must equal n_frames_original");
        }
        for (auto v : row) {
            if (v != 0 && v != 1) fail("user_summaries", "values must be 0 or 1");
        }
    }
}

ad::Tensor VideoRecord::features_tensor() const {
    return ad::Tensor::from({n_frames, feature_dim}, features);
}

void save_dataset(const Dataset& ds, const std::string& manifest_path) {
    if (ds.videos.empty()) throw ValidationError("save_dataset: no videos");
    const fs::path mpath(manifest_path);
    const std::string dname = data_file_name(manifest_path);
    const fs::path dpath = mpath.parent_path() / dname;

    std::ofstream os(dpath, std::ios::binary);
    if (!os) throw ValidationError("cannot open data file for writing: " + dpath.string());
    os.write(kDataMagic, sizeof(kDataMagic));
    io::write_u32(os, static_cast<std::uint32_t>(ds.videos.size()));

    json videos = json::array();
    for (const auto& r : ds.videos) {
        r.validate();
        const std::uint64_t offset = static_cast<std::uint64_t>(os.tellp());
        write_record(os, r);
        videos.push_back({{"id", r.id}, {"offset", offset}});
    }
    if (!os) throw ValidationError("failed writing data file: " + dpath.string());
    os.close();

    json manifest = {
        {"dataset", ds.name},
        {"metric_protocol", to_string(ds.protocol)},
        {"data_file", dname},
        {"videos", videos},
    };
    std::ofstream ms(mpath);
    if (!ms) throw ValidationError("cannot open manifest for writing: " + mpath.string());
    ms << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream ms(manifest_path);
    if (!ms) throw ValidationError("cannot open manifest: " + manifest_path);
    json manifest;
    try {
        manifest = json::parse(ms);
    } catch (const json::parse_error& e) {
        throw ValidationError("bad manifest JSON: " + std::string(e.what()));
    }

    Dataset ds;
    try {
        ds.name = manifest.at("dataset").get<std::string>();
        ds.protocol = protocol_from_string(manifest.at("metric_protocol").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError("bad manifest fields: " + std::string(e.what()));
    }

    const fs::path dpath = fs::path(manifest_path).parent_path() /
                           manifest.at("data_file").get<std::string>();
    std::ifstream is(dpath, std::ios::binary);
    if (!is) throw ValidationError("cannot open data file: " + dpath.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kDataMagic, 8) != 0) {
        throw ValidationError("bad data file magic in " + dpath.string());
    }
    const std::uint32_t n_videos = io::read_u32(is, "video count");
    const auto& manifest_videos = manifest.at("videos");
    if (n_videos == 0 || manifest_videos.empty()) {
        throw ValidationError("no videos in dataset");
    }
    if (manifest_videos.size() != n_videos) {
        throw ValidationError("manifest/data video count mismatch");
    }

    std::vector<std::string> seen_ids;
    for (const auto& entry : manifest_videos) {
        const std::string id = entry.at("id").get<std::string>();
        if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end()) {
            throw ValidationError("duplicate video id '" + id + "'");
        }
        seen_ids.push_back(id);
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        is.seekg(static_cast<std::streamoff>(offset));
        if (!is) throw ValidationError("bad offset for video '" + id + "'");
        VideoRecord r = read_record(is, id);
        r.validate();
        ds.videos.push_back(std::move(r));
    }
    return ds;
}

Dataset synth_planted(std::size_t num_videos, std::size_t n_frames,
                      std::size_t feature_dim, std::uint64_t seed,
                      MetricProtocol protocol) {
    if (n_frames < 10) throw ContractError("synth_planted: need at least 10 frames");
    if (feature_dim < 4) throw ContractError("synth_planted: need feature dim >= 4");

    Dataset ds;
    ds.name = "synth-planted";
    ds.protocol = protocol;
    Rng root(seed);

    const std::size_t planted_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(0.15 * static_cast<double>(n_frames)));

    for (std::size_t v = 0; v < num_videos; ++v) {
        Rng rng = root.child(v + 1);
        VideoRecord r;
        r.id = "synth" + std::to_string(v);
        r.n_frames = n_frames;
        r.feature_dim = feature_dim;
        r.n_frames_original = static_cast<std::int32_t>(2 * n_frames);

        const std::size_t start = rng.uniform_index(n_frames - planted_len + 1);
        const std::size_t end = start + planted_len;

        // Planted cluster center, drawn per video: per-coordinate random
        // sign, fixed magnitude, far from the background cluster at the
        // origin.
        std::vector<double> center(feature_dim);
        for (auto& c : center) c = (rng.uniform() < 0.5 ? -2.0 : 2.0);

        r.features.resize(n_frames * feature_dim);
        for (std::size_t t = 0; t < n_frames; ++t) {
            const bool planted = t >= start && t < end;
            for (std::size_t j = 0; j < feature_dim; ++j) {
                const double mean = planted ? center[j] : 0.0;
                r.features[t * feature_dim + j] = mean + 0.25 * rng.gaussian();
            }
        }

        r.picks.resize(n_frames);
        for (std::size_t t = 0; t < n_frames; ++t) {
            r.picks[t] = static_cast<std::int32_t>(2 * t);
        }

        const std::int32_t seg_a = static_cast<std::int32_t>(2 * start);
        const std::int32_t seg_b = static_cast<std::int32_t>(2 * end);
        const std::int32_t n_orig = r.n_frames_original;
        const std::int32_t chunk = static_cast<std::int32_t>(2 * planted_len);
        auto emit_background = [&](std::int32_t from, std::int32_t to) {
            std::int32_t pos = from;
            while (pos < to) {
                const std::int32_t rem = to - pos;
                const std::int32_t len = rem <= 3 * chunk / 2 ? rem : chunk;
                r.change_points.push_back({pos, pos + len});
                pos += len;
            }
        };
        emit_background(0, seg_a);
        r.change_points.push_back({seg_a, seg_b});
        emit_background(seg_b, n_orig);

        r.gt_frame_scores.assign(n_orig, 0.0);
        std::vector<std::int32_t> summary(n_orig, 0);
        for (std::int32_t f = seg_a; f < seg_b; ++f) {
            r.gt_frame_scores[f] = 1.0;
            summary[f] = 1;
        }
        r.user_summaries.push_back(std::move(summary));

        r.validate();
        ds.videos.push_back(std::move(r));
    }
    return ds;
}

std::vector<double> expand_scores(std::span<const double> scores,
                                  std::span<const std::int32_t> picks,
                                  std::size_t n_frames_original) {
    if (scores.size() != picks.size() || scores.empty()) {
        throw ContractError("expand_scores: scores/picks size mismatch or empty");
    }
    std::vector<double> out(n_frames_original);
    std::size_t idx = 0;
    for (std::size_t f = 0; f < n_frames_original; ++f) {
        while (idx + 1 < picks.size() &&
               static_cast<std::size_t>(picks[idx + 1]) <= f) {
            ++idx;
        }
        out[f] = scores[idx];
    }
    return out;
}

}  // namespace sumgan::data
