#pragma once

// Capture-style degradations. Sampling and application are separate: a
// record holds every sampled parameter, so it can be replayed on pixels or
// used to map annotation boxes without touching pixels at all.
//
// Coordinates are continuous with pixel (i, j) covering [i, i+1) x [j, j+1),
// so its center is (i + 0.5, j + 0.5).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "common.hpp"
#include "doc_model.hpp"
#include "raster_layout.hpp"

namespace docforge {

using raster::Canvas;

struct Range {
    double lo = 0;
    double hi = 0;
    double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
    bool operator==(const Range&) const = default;
};

struct PerspectiveSpec {
    double jitter = 0.02;  // corner jitter sigma, fraction of page size
};
struct BendSpec {
    Range amplitude{2, 8};  // px
    Range wavelength{600, 1400};
    std::string axis = "random";  // x: vertical waves along x, y: horizontal waves along y
};
struct WrinkleSpec {
    int grid = 6;
    double sigma = 1.5;  // px
};
struct RotateSpec {
    Range angle{-3, 3};  // degrees, positive turns clockwise on screen
};
struct IlluminationSpec {
    std::optional<double> direction;  // degrees; sampled uniformly when absent
    Range gain{0.85, 1.1};            // gain at the start and end of the gradient
};
struct ExposureSpec {
    Range gamma{0.8, 1.25};
};
struct BackgroundSpec {
    std::string texture = "random";  // wood | desk | moire | plain | random
    Range scale{0.85, 0.95};         // page-to-canvas scale
};

using TransformParams = std::variant<PerspectiveSpec, BendSpec, WrinkleSpec, RotateSpec, IlluminationSpec, ExposureSpec, BackgroundSpec>;

enum class TransformKind { Perspective, Bend, Wrinkle, Rotate, Illumination, Exposure, Background };

inline constexpr std::array<std::string_view, 7> kTransformNames = {"perspective", "bend",     "wrinkle",   "rotate",
                                                                   "illumination", "exposure", "background"};
inline constexpr std::array<std::string_view, 4> kTextures = {"wood", "desk", "moire", "plain"};

inline std::string_view transform_name(TransformKind k) { return kTransformNames[static_cast<std::size_t>(k)]; }

/// 0 geometric, 1 photometric, 2 background.
inline int transform_stage(TransformKind k) {
    switch (k) {
        case TransformKind::Illumination:
        case TransformKind::Exposure: return 1;
        case TransformKind::Background: return 2;
        default: return 0;
    }
}

struct TransformSpec {
    TransformParams params;
    double probability = 1.0;
    TransformKind kind() const { return static_cast<TransformKind>(params.index()); }
};

struct AugmentationSpec {
    std::vector<TransformSpec> transforms;
};

inline bool is_quarter_turn(double deg) {
    const double q = deg / 90.0;
    return q == std::round(q);
}

/// Problems with a spec; empty means valid.
inline std::vector<std::string> validate_spec(const AugmentationSpec& spec) {
    std::vector<std::string> out;
    int last_stage = 0;
    for (std::size_t i = 0; i < spec.transforms.size(); ++i) {
        const auto& t = spec.transforms[i];
        const auto where = "transform " + std::to_string(i) + " (" + std::string(transform_name(t.kind())) + "): ";
        const int stage = transform_stage(t.kind());
        if (stage < last_stage) out.push_back(where + "must come before photometric and background transforms");
        last_stage = std::max(last_stage, stage);
        if (!(t.probability >= 0 && t.probability <= 1)) out.push_back(where + "probability outside [0,1]");
        auto range_ok = [&](const Range& r, std::string_view name) {
            if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) out.push_back(where + std::string(name) + " range is invalid");
        };
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, PerspectiveSpec>) {
                    if (!(p.jitter >= 0 && p.jitter <= 0.1)) out.push_back(where + "jitter sigma must lie in [0, 0.1]");
                } else if constexpr (std::is_same_v<T, BendSpec>) {
                    range_ok(p.amplitude, "amplitude");
                    range_ok(p.wavelength, "wavelength");
                    if (p.amplitude.lo < 0) out.push_back(where + "amplitude must be non-negative");
                    if (p.wavelength.lo <= 0) out.push_back(where + "wavelength must be positive");
                    if (p.axis != "x" && p.axis != "y" && p.axis != "random") out.push_back(where + "axis must be x, y or random");
                } else if constexpr (std::is_same_v<T, WrinkleSpec>) {
                    if (p.grid < 2 || p.grid > 64) out.push_back(where + "grid must lie in [2, 64]");
                    if (!(p.sigma >= 0 && p.sigma <= 20)) out.push_back(where + "sigma must lie in [0, 20] px");
                } else if constexpr (std::is_same_v<T, RotateSpec>) {
                    range_ok(p.angle, "angle");
                    const bool exact_turn = p.angle.lo == p.angle.hi && is_quarter_turn(p.angle.lo);
                    if (!exact_turn && (std::abs(p.angle.lo) > 45 || std::abs(p.angle.hi) > 45))
                        out.push_back(where + "|angle| must not exceed 45 degrees (exact quarter turns excepted)");
                } else if constexpr (std::is_same_v<T, IlluminationSpec>) {
                    range_ok(p.gain, "gain");
                    if (!(p.gain.lo > 0)) out.push_back(where + "gains must be positive");
                } else if constexpr (std::is_same_v<T, ExposureSpec>) {
                    range_ok(p.gamma, "gamma");
                    if (!(p.gamma.lo > 0)) out.push_back(where + "gamma must be positive");
                } else if constexpr (std::is_same_v<T, BackgroundSpec>) {
                    range_ok(p.scale, "scale");
                    if (!(p.scale.lo > 0.2 && p.scale.hi <= 1)) out.push_back(where + "scale must lie in (0.2, 1]");
                    if (p.texture != "random" && std::find(kTextures.begin(), kTextures.end(), p.texture) == kTextures.end())
                        out.push_back(where + "unknown texture '" + p.texture + "'");
                }
            },
            t.params);
    }
    return out;
}

/// Default chain: every transform, in pipeline order, with mild ranges.
inline AugmentationSpec default_augmentation_spec() {
    return {{{PerspectiveSpec{}, 0.8},
             {BendSpec{}, 0.5},
             {WrinkleSpec{}, 0.5},
             {RotateSpec{}, 0.8},
             {IlluminationSpec{}, 0.8},
             {ExposureSpec{}, 0.7},
             {BackgroundSpec{}, 1.0}}};
}

// ---------------------------------------------------------------------------
// Spec JSON

inline json range_json(const Range& r) { return r.lo == r.hi ? json(r.lo) : json::array({r.lo, r.hi}); }

inline Range range_from_json(const json& j, std::string_view what) {
    if (j.is_number()) return {j.get<double>(), j.get<double>()};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
    fail(ErrorCode::Input, std::string(what) + " must be a number or [lo, hi]");
}

inline json spec_to_json(const AugmentationSpec& spec) {
    json arr = json::array();
    for (const auto& t : spec.transforms) {
        json j{{"type", transform_name(t.kind())}, {"probability", t.probability}};
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, PerspectiveSpec>) {
                    j["jitter"] = p.jitter;
                } else if constexpr (std::is_same_v<T, BendSpec>) {
                    j["amplitude"] = range_json(p.amplitude);
                    j["wavelength"] = range_json(p.wavelength);
                    j["axis"] = p.axis;
                } else if constexpr (std::is_same_v<T, WrinkleSpec>) {
                    j["grid"] = p.grid;
                    j["sigma"] = p.sigma;
                } else if constexpr (std::is_same_v<T, RotateSpec>) {
                    j["angle"] = range_json(p.angle);
                } else if constexpr (std::is_same_v<T, IlluminationSpec>) {
                    if (p.direction) j["direction"] = *p.direction;
                    j["gain"] = json::array({p.gain.lo, p.gain.hi});
                } else if constexpr (std::is_same_v<T, ExposureSpec>) {
                    j["gamma"] = range_json(p.gamma);
                } else {
                    j["texture"] = p.texture;
                    j["scale"] = range_json(p.scale);
                }
            },
            t.params);
        arr.push_back(std::move(j));
    }
    return json{{"transforms", arr}};
}

/// Accepts {"transforms": [...]} or a bare array; unknown keys are errors.
inline AugmentationSpec spec_from_json(const json& doc) {
    const json& arr = doc.is_object() ? doc.at("transforms") : doc;
    if (!arr.is_array()) fail(ErrorCode::Input, "augmentation spec must be an array of transforms");
    AugmentationSpec spec;
    for (const auto& j : arr) {
        if (!j.is_object() || !j.contains("type")) fail(ErrorCode::Input, "transform entries need a \"type\"");
        const auto type = j.at("type").get<std::string>();
        TransformSpec t;
        t.probability = j.value("probability", 1.0);
        std::vector<std::string> allowed{"type", "probability"};
        auto get = [&](const char* key, auto& field) {
            allowed.emplace_back(key);
            if (!j.contains(key)) return;
            using F = std::decay_t<decltype(field)>;
            if constexpr (std::is_same_v<F, Range>) field = range_from_json(j.at(key), key);
            else if constexpr (std::is_same_v<F, std::optional<double>>) field = j.at(key).get<double>();
            else field = j.at(key).get<F>();
        };
        if (type == "perspective") {
            PerspectiveSpec p;
            get("jitter", p.jitter);
            t.params = p;
        } else if (type == "bend") {
            BendSpec p;
            get("amplitude", p.amplitude);
            get("wavelength", p.wavelength);
            get("axis", p.axis);
            t.params = p;
        } else if (type == "wrinkle") {
            WrinkleSpec p;
            get("grid", p.grid);
            get("sigma", p.sigma);
            t.params = p;
        } else if (type == "rotate") {
            RotateSpec p;
            get("angle", p.angle);
            t.params = p;
        } else if (type == "illumination") {
            IlluminationSpec p;
            get("direction", p.direction);
            get("gain", p.gain);
            t.params = p;
        } else if (type == "exposure") {
            ExposureSpec p;
            get("gamma", p.gamma);
            t.params = p;
        } else if (type == "background") {
            BackgroundSpec p;
            get("texture", p.texture);
            get("scale", p.scale);
            t.params = p;
        } else {
            fail(ErrorCode::Input, "unknown transform type '" + type + "'");
        }
        for (const auto& [key, _] : j.items())
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                fail(ErrorCode::Input, "unknown key '" + key + "' in " + type + " transform");
        spec.transforms.push_back(std::move(t));
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Geometry

using Mat3 = Eigen::Matrix3d;

struct Point {
    double x = 0, y = 0;
};

inline Point apply_h(const Mat3& m, Point p) {
    const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
    return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w, (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

/// True if the quad (in order) is strictly convex with consistent winding.
inline bool convex_quad(const std::array<Point, 4>& q) {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
        const auto& a = q[static_cast<std::size_t>(i)];
        const auto& b = q[static_cast<std::size_t>((i + 1) % 4)];
        const auto& c = q[static_cast<std::size_t>((i + 2) % 4)];
        const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (std::abs(cross) < 1e-6) return false;
        const int s = cross > 0 ? 1 : -1;
        if (sign != 0 && s != sign) return false;
        sign = s;
    }
    return true;
}

/// Homography taking src[i] to dst[i]; nullopt when either quad is
/// degenerate.
inline std::optional<Mat3> homography(const std::array<Point, 4>& src, const std::array<Point, 4>& dst) {
    if (!convex_quad(src) || !convex_quad(dst)) return std::nullopt;
    Eigen::Matrix<double, 8, 8> A;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const auto& s = src[static_cast<std::size_t>(i)];
        const auto& d = dst[static_cast<std::size_t>(i)];
        A.row(2 * i) << s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y;
        A.row(2 * i + 1) << 0, 0, 0, s.x, s.y, 1, -d.y * s.x, -d.y * s.y;
        b(2 * i) = d.x;
        b(2 * i + 1) = d.y;
    }
    const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(A);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
    Mat3 m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
    return m;
}

// ---------------------------------------------------------------------------
// Records

struct StepRecord {
    TransformKind kind = TransformKind::Perspective;
    int in_w = 0, in_h = 0, out_w = 0, out_h = 0;
    Mat3 forward = Mat3::Identity();  // perspective, rotate, background
    Mat3 inverse = Mat3::Identity();
    // bend
    double amplitude = 0, wavelength = 1, phase = 0;
    char axis = 'x';
    // wrinkle: displacement at grid nodes spanning the canvas, row-major
    int grid = 0;
    std::vector<double> dx, dy;
    // photometric
    double direction = 0, gain0 = 1, gain1 = 1, gamma = 1;
    // background
    std::string texture;
    double scale = 1;
    int offset_x = 0, offset_y = 0;
    std::uint64_t texture_seed = 0;
    int base_level = 0;
    std::array<Point, 4> corners{};  // perspective destination corners

    bool geometric() const { return transform_stage(kind) == 0 || kind == TransformKind::Background; }

    /// Displacement of the wrinkle field at output point q.
    Point wrinkle_disp(Point q) const {
        const double gx = std::clamp(q.x / out_w * (grid - 1), 0.0, static_cast<double>(grid - 1));
        const double gy = std::clamp(q.y / out_h * (grid - 1), 0.0, static_cast<double>(grid - 1));
        const int ix = std::min(static_cast<int>(gx), grid - 2), iy = std::min(static_cast<int>(gy), grid - 2);
        const double fx = gx - ix, fy = gy - iy;
        auto at = [&](const std::vector<double>& v, int x, int y) { return v[static_cast<std::size_t>(y * grid + x)]; };
        auto lerp = [&](const std::vector<double>& v) {
            return (1 - fy) * ((1 - fx) * at(v, ix, iy) + fx * at(v, ix + 1, iy)) + fy * ((1 - fx) * at(v, ix, iy + 1) + fx * at(v, ix + 1, iy + 1));
        };
        return {lerp(dx), lerp(dy)};
    }

    Point map_forward(Point p) const {
        switch (kind) {
            case TransformKind::Perspective:
            case TransformKind::Rotate:
            case TransformKind::Background: return apply_h(forward, p);
            case TransformKind::Bend: {
                if (axis == 'x') return {p.x, p.y + amplitude * std::sin(2 * std::numbers::pi * p.x / wavelength + phase)};
                return {p.x + amplitude * std::sin(2 * std::numbers::pi * p.y / wavelength + phase), p.y};
            }
            case TransformKind::Wrinkle: {
                // solve q + D(q) = p by fixed-point iteration (D is a small contraction)
                Point q = p;
                for (int it = 0; it < 30; ++it) {
                    const auto d = wrinkle_disp(q);
                    q = {p.x - d.x, p.y - d.y};
                }
                return q;
            }
            default: return p;
        }
    }

    Point map_inverse(Point q) const {
        switch (kind) {
            case TransformKind::Perspective:
            case TransformKind::Rotate:
            case TransformKind::Background: return apply_h(inverse, q);
            case TransformKind::Bend: {
                if (axis == 'x') return {q.x, q.y - amplitude * std::sin(2 * std::numbers::pi * q.x / wavelength + phase)};
                return {q.x - amplitude * std::sin(2 * std::numbers::pi * q.y / wavelength + phase), q.y};
            }
            case TransformKind::Wrinkle: {
                const auto d = wrinkle_disp(q);
                return {q.x + d.x, q.y + d.y};
            }
            default: return q;
        }
    }
};

struct AugmentationRecord {
    int in_w = 0, in_h = 0, out_w = 0, out_h = 0;
    std::vector<StepRecord> steps;

    bool identity() const { return steps.empty(); }
    bool has(TransformKind k) const {
        return std::any_of(steps.begin(), steps.end(), [&](const StepRecord& s) { return s.kind == k; });
    }

    /// Source page point to output canvas point.
    Point map_point(Point p) const {
        for (const auto& s : steps)
            if (s.geometric()) p = s.map_forward(p);
        return p;
    }

    Point unmap_point(Point q) const {
        for (auto it = steps.rbegin(); it != steps.rend(); ++it)
            if (it->geometric()) q = it->map_inverse(q);
        return q;
    }
};

inline json mat_json(const Mat3& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
    return a;
}

inline Mat3 mat_from_json(const json& a) {
    if (!a.is_array() || a.size() != 9) fail(ErrorCode::Input, "matrix must have 9 entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = a[static_cast<std::size_t>(r * 3 + c)].get<double>();
    return m;
}

inline json record_to_json(const AugmentationRecord& rec) {
    json steps = json::array();
    for (const auto& s : rec.steps) {
        json j{{"type", transform_name(s.kind)}, {"in_size", {s.in_w, s.in_h}}, {"out_size", {s.out_w, s.out_h}}};
        switch (s.kind) {
            case TransformKind::Perspective: {
                j["matrix"] = mat_json(s.forward);
                json c = json::array();
                for (const auto& p : s.corners) c.push_back({p.x, p.y});
                j["corners"] = c;
                break;
            }
            case TransformKind::Rotate:
                j["matrix"] = mat_json(s.forward);
                j["angle"] = s.direction;
                break;
            case TransformKind::Bend:
                j["amplitude"] = s.amplitude;
                j["wavelength"] = s.wavelength;
                j["phase"] = s.phase;
                j["axis"] = std::string(1, s.axis);
                break;
            case TransformKind::Wrinkle:
                j["grid"] = s.grid;
                j["dx"] = s.dx;
                j["dy"] = s.dy;
                break;
            case TransformKind::Illumination:
                j["direction"] = s.direction;
                j["gain"] = {s.gain0, s.gain1};
                break;
            case TransformKind::Exposure: j["gamma"] = s.gamma; break;
            case TransformKind::Background:
                j["matrix"] = mat_json(s.forward);
                j["texture"] = s.texture;
                j["scale"] = s.scale;
                j["offset"] = {s.offset_x, s.offset_y};
                j["texture_seed"] = s.texture_seed;
                j["base_level"] = s.base_level;
                break;
        }
        steps.push_back(std::move(j));
    }
    return json{{"input_size", {rec.in_w, rec.in_h}}, {"output_size", {rec.out_w, rec.out_h}}, {"steps", steps}};
}

inline AugmentationRecord record_from_json(const json& j) {
    AugmentationRecord rec;
    rec.in_w = j.at("input_size").at(0).get<int>();
    rec.in_h = j.at("input_size").at(1).get<int>();
    rec.out_w = j.at("output_size").at(0).get<int>();
    rec.out_h = j.at("output_size").at(1).get<int>();
    for (const auto& sj : j.at("steps")) {
        StepRecord s;
        const auto type = sj.at("type").get<std::string>();
        const auto it = std::find(kTransformNames.begin(), kTransformNames.end(), type);
        if (it == kTransformNames.end()) fail(ErrorCode::Input, "unknown step type '" + type + "' in augmentation record");
        s.kind = static_cast<TransformKind>(it - kTransformNames.begin());
        s.in_w = sj.at("in_size").at(0).get<int>();
        s.in_h = sj.at("in_size").at(1).get<int>();
        s.out_w = sj.at("out_size").at(0).get<int>();
        s.out_h = sj.at("out_size").at(1).get<int>();
        switch (s.kind) {
            case TransformKind::Perspective:
                s.forward = mat_from_json(sj.at("matrix"));
                for (std::size_t i = 0; i < 4; ++i) s.corners[i] = {sj.at("corners").at(i).at(0).get<double>(), sj.at("corners").at(i).at(1).get<double>()};
                break;
            case TransformKind::Rotate:
                s.forward = mat_from_json(sj.at("matrix"));
                s.direction = sj.value("angle", 0.0);
                break;
            case TransformKind::Bend:
                s.amplitude = sj.at("amplitude").get<double>();
                s.wavelength = sj.at("wavelength").get<double>();
                s.phase = sj.at("phase").get<double>();
                s.axis = sj.at("axis").get<std::string>() == "y" ? 'y' : 'x';
                break;
            case TransformKind::Wrinkle:
                s.grid = sj.at("grid").get<int>();
                s.dx = sj.at("dx").get<std::vector<double>>();
                s.dy = sj.at("dy").get<std::vector<double>>();
                if (s.grid < 2 || s.dx.size() != static_cast<std::size_t>(s.grid * s.grid) || s.dy.size() != s.dx.size())
                    fail(ErrorCode::Input, "wrinkle grid size mismatch in augmentation record");
                break;
            case TransformKind::Illumination:
                s.direction = sj.at("direction").get<double>();
                s.gain0 = sj.at("gain").at(0).get<double>();
                s.gain1 = sj.at("gain").at(1).get<double>();
                break;
            case TransformKind::Exposure: s.gamma = sj.at("gamma").get<double>(); break;
            case TransformKind::Background:
                s.forward = mat_from_json(sj.at("matrix"));
                s.texture = sj.at("texture").get<std::string>();
                s.scale = sj.at("scale").get<double>();
                s.offset_x = sj.at("offset").at(0).get<int>();
                s.offset_y = sj.at("offset").at(1).get<int>();
                s.texture_seed = sj.at("texture_seed").get<std::uint64_t>();
                s.base_level = sj.at("base_level").get<int>();
                break;
        }
        if (s.kind == TransformKind::Perspective || s.kind == TransformKind::Rotate || s.kind == TransformKind::Background)
            s.inverse = s.forward.inverse();
        rec.steps.push_back(std::move(s));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline Mat3 translation(double tx, double ty) {
    Mat3 m = Mat3::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return m;
}

/// Rotation by `deg` clockwise on screen about the page center, followed by
/// a shift into the enlarged canvas. Exact quarter turns use exact entries.
inline StepRecord rotation_step(int w, int h, double deg) {
    StepRecord s;
    s.kind = TransformKind::Rotate;
    s.in_w = w;
    s.in_h = h;
    s.direction = deg;
    double c, si;
    if (is_quarter_turn(deg)) {
        const long q = ((std::lround(deg / 90.0) % 4) + 4) % 4;
        static constexpr double cs[4] = {1, 0, -1, 0};
        static constexpr double sn[4] = {0, 1, 0, -1};
        c = cs[q];
        si = sn[q];
        s.out_w = q % 2 ? h : w;
        s.out_h = q % 2 ? w : h;
    } else {
        const double rad = deg * std::numbers::pi / 180.0;
        c = std::cos(rad);
        si = std::sin(rad);
        s.out_w = static_cast<int>(std::ceil(std::abs(w * c) + std::abs(h * si) - 1e-6));
        s.out_h = static_cast<int>(std::ceil(std::abs(w * si) + std::abs(h * c) - 1e-6));
    }
    Mat3 r = Mat3::Identity();
    r(0, 0) = c;
    r(0, 1) = -si;
    r(1, 0) = si;
    r(1, 1) = c;
    s.forward = translation(s.out_w / 2.0, s.out_h / 2.0) * r * translation(-w / 2.0, -h / 2.0);
    s.inverse = s.forward.inverse();
    return s;
}

inline StepRecord perspective_step(int w, int h, double jitter, Rng& rng) {
    StepRecord s;
    s.kind = TransformKind::Perspective;
    s.in_w = s.out_w = w;
    s.in_h = s.out_h = h;
    const std::array<Point, 4> src{{{0, 0}, {double(w), 0}, {double(w), double(h)}, {0, double(h)}}};
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::array<Point, 4> dst;
        for (std::size_t i = 0; i < 4; ++i) dst[i] = {src[i].x + rng.normal() * jitter * w, src[i].y + rng.normal() * jitter * h};
        if (auto m = homography(src, dst)) {
            s.forward = *m;
            s.inverse = m->inverse();
            s.corners = dst;
            return s;
        }
    }
    fail(ErrorCode::Internal, "perspective jitter produced a degenerate homography 8 times");
}

inline StepRecord wrinkle_step(int w, int h, int grid, double sigma, Rng& rng) {
    StepRecord s;
    s.kind = TransformKind::Wrinkle;
    s.in_w = s.out_w = w;
    s.in_h = s.out_h = h;
    s.grid = grid;
    const auto n = static_cast<std::size_t>(grid * grid);
    std::vector<double> rx(n), ry(n);
    for (std::size_t i = 0; i < n; ++i) {
        rx[i] = rng.normal() * sigma;
        ry[i] = rng.normal() * sigma;
    }
    // one pass of 3x3 box smoothing
    auto smooth = [&](const std::vector<double>& v) {
        std::vector<double> o(n);
        for (int y = 0; y < grid; ++y)
            for (int x = 0; x < grid; ++x) {
                double sum = 0;
                int cnt = 0;
                for (int yy = std::max(0, y - 1); yy <= std::min(grid - 1, y + 1); ++yy)
                    for (int xx = std::max(0, x - 1); xx <= std::min(grid - 1, x + 1); ++xx) {
                        sum += v[static_cast<std::size_t>(yy * grid + xx)];
                        ++cnt;
                    }
                o[static_cast<std::size_t>(y * grid + x)] = sum / cnt;
            }
        return o;
    };
    s.dx = smooth(rx);
    s.dy = smooth(ry);
    return s;
}

}  // namespace detail

/// Samples concrete parameters for a page of size w x h.
inline AugmentationRecord sample_augmentation(int w, int h, const AugmentationSpec& spec, std::uint64_t seed) {
    if (auto problems = validate_spec(spec); !problems.empty()) fail(ErrorCode::Validation, "augmentation spec: " + join(problems, "; "));
    AugmentationRecord rec;
    rec.in_w = rec.out_w = w;
    rec.in_h = rec.out_h = h;
    for (std::size_t i = 0; i < spec.transforms.size(); ++i) {
        const auto& t = spec.transforms[i];
        Rng rng(derive_seed(seed, transform_name(t.kind()), i));
        if (t.probability < 1 && !rng.bernoulli(t.probability)) continue;
        const int cw = rec.out_w, ch = rec.out_h;
        StepRecord s;
        s.kind = t.kind();
        s.in_w = s.out_w = cw;
        s.in_h = s.out_h = ch;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, PerspectiveSpec>) {
                    s = detail::perspective_step(cw, ch, p.jitter, rng);
                } else if constexpr (std::is_same_v<T, BendSpec>) {
                    s.amplitude = p.amplitude.sample(rng);
                    s.wavelength = p.wavelength.sample(rng);
                    s.phase = rng.uniform(0, 2 * std::numbers::pi);
                    s.axis = p.axis == "random" ? (rng.bernoulli(0.5) ? 'x' : 'y') : p.axis[0];
                } else if constexpr (std::is_same_v<T, WrinkleSpec>) {
                    s = detail::wrinkle_step(cw, ch, p.grid, p.sigma, rng);
                } else if constexpr (std::is_same_v<T, RotateSpec>) {
                    s = detail::rotation_step(cw, ch, p.angle.sample(rng));
                } else if constexpr (std::is_same_v<T, IlluminationSpec>) {
                    s.direction = p.direction ? *p.direction : rng.uniform(0, 360);
                    s.gain0 = p.gain.lo;
                    s.gain1 = p.gain.hi;
                } else if constexpr (std::is_same_v<T, ExposureSpec>) {
                    s.gamma = p.gamma.sample(rng);
                } else {
                    s.texture = p.texture == "random" ? std::string(kTextures[rng.index(kTextures.size())]) : p.texture;
                    s.scale = p.scale.sample(rng);
                    s.out_w = static_cast<int>(std::lround(cw / s.scale));
                    s.out_h = static_cast<int>(std::lround(ch / s.scale));
                    s.offset_x = (s.out_w - cw) / 2;
                    s.offset_y = (s.out_h - ch) / 2;
                    s.forward = detail::translation(s.offset_x, s.offset_y);
                    s.inverse = detail::translation(-s.offset_x, -s.offset_y);
                    s.texture_seed = rng.next();
                    s.base_level = static_cast<int>(rng.uniform_int(90, 200));
                }
            },
            t.params);
        rec.out_w = s.out_w;
        rec.out_h = s.out_h;
        rec.steps.push_back(std::move(s));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Pixels

namespace detail {

inline double hash_noise(std::uint64_t seed, int x, int y) {
    const auto h = splitmix64(seed ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32 | static_cast<std::uint32_t>(y)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double texture_value(const StepRecord& s, int x, int y) {
    const double base = s.base_level;
    const double ph = static_cast<double>(s.texture_seed % 1000) / 1000.0 * 2 * std::numbers::pi;
    if (s.texture == "wood") {
        const double ring = std::sin(0.035 * x + 6.0 * std::sin(0.004 * y + ph) + 0.5 * std::sin(0.05 * y));
        return base + 28 * ring + 8 * (hash_noise(s.texture_seed, x / 3, y / 3) - 0.5);
    }
    if (s.texture == "desk") return base + 18 * (hash_noise(s.texture_seed, x / 4, y / 4) - 0.5) + 6 * (hash_noise(s.texture_seed + 1, x, y) - 0.5);
    if (s.texture == "moire") {
        const double a = std::sin(2 * std::numbers::pi * (x * std::cos(ph) + y * std::sin(ph)) / 7.0);
        const double b = std::sin(2 * std::numbers::pi * (x * std::cos(ph + 0.08) + y * std::sin(ph + 0.08)) / 7.3);
        return base + 30 * a * b;
    }
    return base;
}

inline std::uint8_t clamp_px(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

/// Replays a record on a canvas of the record's input size.
inline Canvas apply_augmentation(const Canvas& in, const AugmentationRecord& rec) {
    if (in.width != rec.in_w || in.height != rec.in_h)
        fail(ErrorCode::Validation, "augmentation record is for a " + std::to_string(rec.in_w) + "x" + std::to_string(rec.in_h) + " page, got " +
                                        std::to_string(in.width) + "x" + std::to_string(in.height));
    if (rec.identity()) return in;
    const int ch = in.channels;
    const bool warp = std::any_of(rec.steps.begin(), rec.steps.end(), [](const StepRecord& s) { return s.geometric(); });
    const StepRecord* background = nullptr;
    std::vector<const StepRecord*> photometric;
    for (const auto& s : rec.steps) {
        if (s.kind == TransformKind::Background) background = &s;
        if (transform_stage(s.kind) == 1) photometric.push_back(&s);
    }
    std::vector<std::array<std::uint8_t, 256>> gamma_luts;
    for (const auto* s : photometric)
        if (s->kind == TransformKind::Exposure) {
            std::array<std::uint8_t, 256> lut{};
            for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = detail::clamp_px(255.0 * std::pow(v / 255.0, s->gamma));
            gamma_luts.push_back(lut);
        }
    auto photo = [&](double v, int x, int y) {
        std::size_t lut = 0;
        for (const auto* s : photometric) {
            if (s->kind == TransformKind::Illumination) {
                const double rad = s->direction * std::numbers::pi / 180.0;
                const double dx = std::cos(rad), dy = std::sin(rad);
                // projection of the pixel center onto the gradient axis, normalized to [0, 1]
                const double ext = std::abs(dx) * rec.out_w + std::abs(dy) * rec.out_h;
                const double p0 = std::min(0.0, dx * rec.out_w) + std::min(0.0, dy * rec.out_h);
                const double t = ext > 0 ? ((x + 0.5) * dx + (y + 0.5) * dy - p0) / ext : 0.0;
                const double gain = s->gain0 + (s->gain1 - s->gain0) * t;
                v = detail::clamp_px(v * gain);
            } else {
                v = gamma_luts[lut++][detail::clamp_px(v)];
            }
        }
        return v;
    };

    Canvas out(rec.out_w, rec.out_h, ch);
    std::vector<double> px(static_cast<std::size_t>(ch));
    for (int y = 0; y < rec.out_h; ++y) {
        for (int x = 0; x < rec.out_w; ++x) {
            auto* dst = out.at(x, y);
            double alpha = 1.0;
            if (warp) {
                const Point p = rec.unmap_point({x + 0.5, y + 0.5});
                const double sx = p.x - 0.5, sy = p.y - 0.5;
                const double fx0 = std::floor(sx), fy0 = std::floor(sy);
                const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
                const double fx = sx - fx0, fy = sy - fy0;
                alpha = 0;
                std::fill(px.begin(), px.end(), 0.0);
                if (x0 >= -1 && y0 >= -1 && x0 < in.width && y0 < in.height) {
                    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
                    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
                    for (int k = 0; k < 4; ++k) {
                        if (wts[k] == 0 || xs[k] < 0 || ys[k] < 0 || xs[k] >= in.width || ys[k] >= in.height) continue;
                        alpha += wts[k];
                        const auto* src = in.at(xs[k], ys[k]);
                        for (int c = 0; c < ch; ++c) px[static_cast<std::size_t>(c)] += wts[k] * src[c];
                    }
                }
                if (alpha > 0)
                    for (auto& v : px) v /= alpha;
            } else {
                const auto* src = in.at(x, y);
                for (int c = 0; c < ch; ++c) px[static_cast<std::size_t>(c)] = src[c];
            }
            const double bg = alpha < 1 ? (background ? detail::texture_value(*background, x, y) : 255.0) : 0.0;
            for (int c = 0; c < ch; ++c) {
                double v = alpha > 0 ? px[static_cast<std::size_t>(c)] : 0.0;
                if (alpha > 0 && !photometric.empty()) v = photo(v, x, y);
                dst[c] = detail::clamp_px(alpha * v + (1 - alpha) * bg);
            }
        }
    }
    return out;
}

inline std::pair<Canvas, AugmentationRecord> augment(const Canvas& page, const AugmentationSpec& spec, std::uint64_t seed) {
    auto rec = sample_augmentation(page.width, page.height, spec, seed);
    auto out = apply_augmentation(page, rec);
    return {std::move(out), std::move(rec)};
}

/// Maps a source-page box to the output canvas: the axis-aligned hull of
/// its mapped corners (plus edge samples for non-projective steps), with
/// edges rounded to whole pixels and clipped to the canvas.
inline PixelBox remap_box(const PixelBox& b, const AugmentationRecord& rec) {
    if (rec.identity()) return b;
    const bool curved = rec.has(TransformKind::Bend) || rec.has(TransformKind::Wrinkle);
    const int samples = curved ? 16 : 1;
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    auto visit = [&](double x, double y) {
        const auto q = rec.map_point({x, y});
        x0 = std::min(x0, q.x);
        y0 = std::min(y0, q.y);
        x1 = std::max(x1, q.x);
        y1 = std::max(y1, q.y);
    };
    for (int i = 0; i <= samples; ++i) {
        const double t = static_cast<double>(i) / samples;
        visit(b.x + t * b.w, b.y);
        visit(b.x + t * b.w, b.bottom());
        visit(b.x, b.y + t * b.h);
        visit(b.right(), b.y + t * b.h);
    }
    const auto cx0 = std::clamp(std::llround(x0), 0LL, static_cast<long long>(rec.out_w));
    const auto cy0 = std::clamp(std::llround(y0), 0LL, static_cast<long long>(rec.out_h));
    const auto cx1 = std::clamp(std::llround(x1), 0LL, static_cast<long long>(rec.out_w));
    const auto cy1 = std::clamp(std::llround(y1), 0LL, static_cast<long long>(rec.out_h));
    return {static_cast<int>(cx0), static_cast<int>(cy0), static_cast<int>(std::max(0LL, cx1 - cx0)), static_cast<int>(std::max(0LL, cy1 - cy0))};
}

inline std::vector<SidecarEntry> remap_bboxes(std::vector<SidecarEntry> blocks, const AugmentationRecord& rec) {
    for (auto& b : blocks) b.bbox = remap_box(b.bbox, rec);
    return blocks;
}

}  // namespace docforge
