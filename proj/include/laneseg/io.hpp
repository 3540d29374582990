#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "lane_attention.hpp"
#include "metrics.hpp"

namespace laneseg {

inline constexpr int kFormatVersion = 1;

enum class IoErrorCode { Parse, Schema, Invariant, Io };

inline const char* to_string(IoErrorCode c) {
    switch (c) {
        case IoErrorCode::Parse: return "parse";
        case IoErrorCode::Schema: return "schema";
        case IoErrorCode::Invariant: return "invariant";
        case IoErrorCode::Io: return "io";
    }
    return "?";
}

class IoError : public std::runtime_error {
public:
    IoError(IoErrorCode code, const std::string& msg, std::optional<int> segment = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + " error: " + msg), code_(code), segment_(segment) {}

    IoErrorCode code() const { return code_; }
    std::optional<int> segment_id() const { return segment_; }

private:
    IoErrorCode code_;
    std::optional<int> segment_;
};

enum class FileKind { Auto, GroundTruth, Prediction };

struct LoadOptions {
    bool strict = true;
    FileKind kind = FileKind::Auto;
};

// ---------------------------------------------------------------- canonical JSON

namespace detail {

inline std::string format_fixed(double v) {
    if (!std::isfinite(v)) throw IoError(IoErrorCode::Invariant, "cannot serialize a non-finite number");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s(buf);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

inline bool is_flat_array(const nlohmann::json& j) {
    if (!j.is_array()) return false;
    for (const auto& e : j)
        if (e.is_array() || e.is_object()) return false;
    return true;
}

inline void dump_canonical(const nlohmann::json& j, std::string& out, int indent) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    const std::string inner(static_cast<std::size_t>(indent + 2), ' ');
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (const auto& [k, v] : j.items()) {  // std::map storage: keys already sorted
                if (!first) out += ",\n";
                first = false;
                out += inner + nlohmann::json(k).dump() + ": ";
                dump_canonical(v, out, indent + 2);
            }
            out += "\n" + pad + "}";
            return;
        }
        case nlohmann::json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            if (is_flat_array(j)) {
                out += "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ", ";
                    dump_canonical(j[i], out, indent);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += inner;
                dump_canonical(j[i], out, indent + 2);
            }
            out += "\n" + pad + "]";
            return;
        }
        case nlohmann::json::value_t::number_float: out += format_fixed(j.get<double>()); return;
        default: out += j.dump(); return;
    }
}

}  // namespace detail

/// Sorted keys, two-space indent, floats with exactly six decimals,
/// trailing newline.
inline std::string dump_canonical(const nlohmann::json& j) {
    std::string out;
    detail::dump_canonical(j, out, 0);
    out += "\n";
    return out;
}

// ---------------------------------------------------------------- scene files

namespace detail {

inline nlohmann::json points_json(const Polyline3& line) {
    auto arr = nlohmann::json::array();
    for (const auto& p : line) arr.push_back(nlohmann::json::array({p.x, p.y, p.z}));
    return arr;
}

inline nlohmann::json range_json(const BevRange& r) {
    return {{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min}, {"y_max", r.y_max}};
}

[[noreturn]] inline void schema_fail(const std::string& where, const std::string& what) {
    throw IoError(IoErrorCode::Schema, where + ": " + what);
}

inline void check_fields(const nlohmann::json& obj, const std::string& where, const std::set<std::string>& required,
                         const std::set<std::string>& optional, bool strict) {
    if (!obj.is_object()) schema_fail(where, "expected an object");
    for (const auto& k : required)
        if (!obj.contains(k)) schema_fail(where, "missing field '" + k + "'");
    if (strict)
        for (const auto& [k, v] : obj.items())
            if (!required.count(k) && !optional.count(k)) schema_fail(where, "unknown field '" + k + "'");
}

inline double number_of(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) schema_fail(where, "expected a number");
    return j.get<double>();
}

inline int int_of(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number_integer()) schema_fail(where, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < INT32_MIN || v > INT32_MAX) schema_fail(where, "integer out of range");
    return static_cast<int>(v);
}

inline std::string string_of(const nlohmann::json& j, const std::string& where) {
    if (!j.is_string()) schema_fail(where, "expected a string");
    return j.get<std::string>();
}

inline Polyline3 points_of(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) schema_fail(where, "expected an array of [x, y, z]");
    Polyline3 out;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 3) schema_fail(where, "each point must be [x, y, z]");
        out.push_back({number_of(p[0], where), number_of(p[1], where), number_of(p[2], where)});
    }
    return out;
}

inline LineType line_type_of(const nlohmann::json& j, const std::string& where) {
    const auto s = string_of(j, where);
    for (auto t : {LineType::NonVisible, LineType::Solid, LineType::Dashed})
        if (s == to_string(t)) return t;
    schema_fail(where, "unknown line type '" + s + "'");
}

inline LaneClass lane_class_of(const nlohmann::json& j, const std::string& where) {
    const auto s = string_of(j, where);
    for (auto c : {LaneClass::LaneSegment, LaneClass::PedCrossing})
        if (s == to_string(c)) return c;
    schema_fail(where, "unknown class '" + s + "'");
}

inline BevRange range_of(const nlohmann::json& j, const std::string& where, bool strict) {
    check_fields(j, where, {"x_min", "x_max", "y_min", "y_max"}, {}, strict);
    return {number_of(j["x_min"], where), number_of(j["x_max"], where), number_of(j["y_min"], where),
            number_of(j["y_max"], where)};
}

inline const char* kind_name(SceneKind k) { return k == SceneKind::GroundTruth ? "gt" : "pred"; }

}  // namespace detail

/// JSON document for a list of frames. All frames must share one kind.
/// Ground truth writes successors as id lists; predictions write
/// {id, score} for every nonzero score and carry confidences.
inline nlohmann::json scenes_to_json(const std::vector<Scene>& scenes) {
    SceneKind kind = scenes.empty() ? SceneKind::GroundTruth : scenes.front().kind;
    for (const auto& s : scenes)
        if (s.kind != kind) throw IoError(IoErrorCode::Invariant, "cannot mix ground-truth and prediction frames");
    auto frames = nlohmann::json::array();
    for (const auto& scene : scenes) {
        const auto& g = scene.graph;
        if (g.adjacency.rows != g.size() || g.adjacency.cols != g.size())
            throw IoError(IoErrorCode::Invariant, "frame '" + scene.frame_id + "': adjacency shape");
        auto segs = nlohmann::json::array();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto& s = g.segments[i];
            nlohmann::json js{{"id", s.id},
                              {"class", to_string(s.lane_class)},
                              {"centerline", detail::points_json(s.centerline)},
                              {"left_boundary", detail::points_json(s.left_boundary)},
                              {"right_boundary", detail::points_json(s.right_boundary)},
                              {"left_type", to_string(s.left_type)},
                              {"right_type", to_string(s.right_type)}};
            auto succ = nlohmann::json::array();
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double v = g.adjacency(i, j);
                if (v == 0.0) continue;
                if (kind == SceneKind::GroundTruth)
                    succ.push_back(g.segments[j].id);
                else
                    succ.push_back({{"id", g.segments[j].id}, {"score", v}});
            }
            js["successors"] = std::move(succ);
            if (kind == SceneKind::Prediction) js["confidence"] = s.confidence;
            segs.push_back(std::move(js));
        }
        frames.push_back({{"frame_id", scene.frame_id},
                          {"range", detail::range_json(scene.range)},
                          {"lane_segments", std::move(segs)}});
    }
    return {{"format_version", kFormatVersion}, {"kind", detail::kind_name(kind)}, {"frames", std::move(frames)}};
}

inline std::string serialize_scenes(const std::vector<Scene>& scenes) { return dump_canonical(scenes_to_json(scenes)); }

/// Parses and (in strict mode) validates a scene document. The kind comes
/// from the "kind" field when present, else from `opts.kind`, else from
/// whether any segment carries a confidence.
inline std::vector<Scene> parse_scenes(const std::string& text, const LoadOptions& opts = {}) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(IoErrorCode::Parse, e.what());
    }
    detail::check_fields(doc, "document", {"format_version", "frames"}, {"kind"}, opts.strict);
    if (detail::int_of(doc["format_version"], "format_version") != kFormatVersion)
        detail::schema_fail("format_version", "unsupported version");
    if (!doc["frames"].is_array()) detail::schema_fail("frames", "expected an array");

    FileKind kind = opts.kind;
    if (doc.contains("kind")) {
        const auto k = detail::string_of(doc["kind"], "kind");
        if (k != "gt" && k != "pred") detail::schema_fail("kind", "expected 'gt' or 'pred'");
        const FileKind declared = k == "gt" ? FileKind::GroundTruth : FileKind::Prediction;
        if (kind != FileKind::Auto && kind != declared)
            detail::schema_fail("kind", "file declares '" + k + "' but a different kind was requested");
        kind = declared;
    }
    if (kind == FileKind::Auto) {
        kind = FileKind::GroundTruth;
        for (const auto& f : doc["frames"])
            if (f.is_object() && f.contains("lane_segments") && f["lane_segments"].is_array())
                for (const auto& s : f["lane_segments"])
                    if (s.is_object() && s.contains("confidence")) kind = FileKind::Prediction;
    }
    const bool is_gt = kind == FileKind::GroundTruth;

    std::vector<Scene> scenes;
    for (std::size_t fi = 0; fi < doc["frames"].size(); ++fi) {
        const auto& f = doc["frames"][fi];
        const std::string fwhere = "frames[" + std::to_string(fi) + "]";
        detail::check_fields(f, fwhere, {"frame_id", "range", "lane_segments"}, {}, opts.strict);
        Scene scene;
        scene.kind = is_gt ? SceneKind::GroundTruth : SceneKind::Prediction;
        scene.frame_id = detail::string_of(f["frame_id"], fwhere + ".frame_id");
        scene.range = detail::range_of(f["range"], fwhere + ".range", opts.strict);
        if (!f["lane_segments"].is_array()) detail::schema_fail(fwhere + ".lane_segments", "expected an array");

        std::vector<LaneSegment> segs;
        std::vector<std::vector<std::pair<int, double>>> succ;
        const std::set<std::string> required{"id",       "class",     "centerline", "left_boundary", "right_boundary",
                                             "left_type", "right_type", "successors"};
        const std::set<std::string> optional = is_gt ? std::set<std::string>{} : std::set<std::string>{"confidence"};
        for (std::size_t si = 0; si < f["lane_segments"].size(); ++si) {
            const auto& js = f["lane_segments"][si];
            const std::string where = fwhere + ".lane_segments[" + std::to_string(si) + "]";
            if (is_gt && opts.strict && js.is_object() && js.contains("confidence"))
                detail::schema_fail(where, "ground truth must not carry a confidence field");
            detail::check_fields(js, where, required, optional, opts.strict);
            LaneSegment s;
            s.id = detail::int_of(js["id"], where + ".id");
            s.lane_class = detail::lane_class_of(js["class"], where + ".class");
            s.centerline = detail::points_of(js["centerline"], where + ".centerline");
            s.left_boundary = detail::points_of(js["left_boundary"], where + ".left_boundary");
            s.right_boundary = detail::points_of(js["right_boundary"], where + ".right_boundary");
            s.left_type = detail::line_type_of(js["left_type"], where + ".left_type");
            s.right_type = detail::line_type_of(js["right_type"], where + ".right_type");
            if (!is_gt) {
                if (!js.contains("confidence")) detail::schema_fail(where, "prediction requires a confidence field");
                s.confidence = detail::number_of(js["confidence"], where + ".confidence");
            }
            const auto& jsucc = js["successors"];
            if (!jsucc.is_array()) detail::schema_fail(where + ".successors", "expected an array");
            std::vector<std::pair<int, double>> edges;
            for (const auto& e : jsucc) {
                if (is_gt) {
                    edges.emplace_back(detail::int_of(e, where + ".successors"), 1.0);
                } else {
                    detail::check_fields(e, where + ".successors", {"id", "score"}, {}, opts.strict);
                    edges.emplace_back(detail::int_of(e["id"], where + ".successors.id"),
                                       detail::number_of(e["score"], where + ".successors.score"));
                }
            }
            segs.push_back(std::move(s));
            succ.push_back(std::move(edges));
        }
        scene.graph = make_graph(std::move(segs));
        for (std::size_t i = 0; i < succ.size(); ++i) {
            for (const auto& [id, score] : succ[i]) {
                const auto j = index_of(scene.graph, id);
                if (j < 0)
                    throw IoError(IoErrorCode::Invariant,
                                  fwhere + ": segment " + std::to_string(scene.graph.segments[i].id) +
                                      " lists unknown successor " + std::to_string(id),
                                  scene.graph.segments[i].id);
                scene.graph.adjacency(i, static_cast<std::size_t>(j)) = score;
            }
        }
        if (opts.strict) {
            const auto violations = validate_scene(scene);
            if (!violations.empty()) {
                const auto& v = violations.front();
                std::string msg = "frame '" + scene.frame_id + "'";
                if (v.segment_id >= 0) msg += ", segment " + std::to_string(v.segment_id);
                msg += ": " + v.rule + " (" + v.detail + ")";
                if (violations.size() > 1) msg += " and " + std::to_string(violations.size() - 1) + " more";
                throw IoError(IoErrorCode::Invariant, msg,
                              v.segment_id >= 0 ? std::optional<int>(v.segment_id) : std::nullopt);
            }
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorCode::Io, "cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError(IoErrorCode::Io, "read failed for '" + path + "'");
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrorCode::Io, "cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError(IoErrorCode::Io, "write failed for '" + path + "'");
}

inline std::vector<Scene> load_scenes(const std::string& path, const LoadOptions& opts = {}) {
    return parse_scenes(read_text_file(path), opts);
}

inline void save_scenes(const std::string& path, const std::vector<Scene>& scenes) {
    write_text_file(path, serialize_scenes(scenes));
}

/// Single-frame convenience wrappers.
inline Scene load_scene(const std::string& path, const LoadOptions& opts = {}) {
    auto scenes = load_scenes(path, opts);
    if (scenes.size() != 1)
        throw IoError(IoErrorCode::Schema, "'" + path + "' holds " + std::to_string(scenes.size()) + " frames, expected 1");
    return std::move(scenes.front());
}

inline void save_scene(const std::string& path, const Scene& scene) { save_scenes(path, {scene}); }

// ---------------------------------------------------------------- BEV grid files

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
}

}  // namespace detail

inline std::string serialize_grid(const BevGrid& grid) {
    const nlohmann::json header{{"H", grid.H()},
                                {"W", grid.W()},
                                {"C", grid.C},
                                {"dtype", "f64"},
                                {"range", detail::range_json(grid.spec.range)}};
    std::string out = header.dump();
    out += '\n';
    const std::size_t start = out.size();
    out.resize(start + 8 * grid.data.size());
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
        const auto bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(grid.data[i]));
        std::memcpy(out.data() + start + 8 * i, &bits, 8);
    }
    return out;
}

inline BevGrid parse_grid(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw IoError(IoErrorCode::Parse, "grid file has no header line");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(IoErrorCode::Parse, std::string("grid header: ") + e.what());
    }
    detail::check_fields(h, "grid header", {"H", "W", "C", "dtype", "range"}, {}, true);
    if (detail::string_of(h["dtype"], "dtype") != "f64") detail::schema_fail("grid header", "dtype must be 'f64'");
    auto dim = [&](const char* k) {
        const int v = detail::int_of(h[k], std::string("grid header.") + k);
        if (v <= 0) detail::schema_fail("grid header", std::string(k) + " must be positive");
        return static_cast<std::size_t>(v);
    };
    const std::size_t H = dim("H"), W = dim("W"), C = dim("C");
    BevGrid grid(GridSpec{H, W, detail::range_of(h["range"], "grid header.range", true)}, C);
    const std::size_t payload = bytes.size() - nl - 1;
    if (payload != 8 * H * W * C)
        throw IoError(IoErrorCode::Invariant, "grid payload is " + std::to_string(payload) + " bytes, expected " +
                                                  std::to_string(8 * H * W * C));
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + nl + 1 + 8 * i, 8);
        grid.data[i] = std::bit_cast<double>(detail::to_little_endian(bits));
    }
    return grid;
}

inline BevGrid load_grid(const std::string& path) { return parse_grid(read_text_file(path)); }
inline void save_grid(const std::string& path, const BevGrid& grid) { write_text_file(path, serialize_grid(grid)); }

// ---------------------------------------------------------------- reports

/// AP, mAP, DET, TOP and OLS values are fractions internally and reported
/// x100; AE_dist stays in meters and AE_type is already a percentage.
inline double report_scale(const std::string& key) {
    for (const char* p : {"AP", "mAP", "DET", "TOP", "OLS"})
        if (key.rfind(p, 0) == 0) return 100.0;
    return 1.0;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json metrics = nlohmann::json::object(), per = nlohmann::json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = v * report_scale(k);
    for (const auto& [k, v] : r.per_threshold) per[k] = v * report_scale(k);
    return {{"task", r.task}, {"frame_count", r.frame_count}, {"metrics", metrics}, {"per_threshold", per}};
}

inline std::string serialize_report(const EvalReport& r) { return dump_canonical(report_to_json(r)); }

}  // namespace laneseg
