#include <blochpack/errors.hpp>
#include <blochpack/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "field dumps are defined little-endian; add byte swapping for this platform");

namespace bloch {

using nlohmann::json;

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);  // binary: no newline translation
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out << ',';
        out << table.header[i];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw IoError("csv row width does not match the header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed on '" + path + "'");
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty csv '" + path + "'");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            row.push_back(std::strtod(cell.c_str(), &end));
            if (end == cell.c_str()) throw IoError("non-numeric cell in '" + path + "'");
        }
        if (row.size() != t.header.size()) throw IoError("ragged csv '" + path + "'");
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------
// binary field snapshots

namespace {

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated field dump '" + path + "'");
    return v;
}

}  // namespace

void write_field_dump(const std::string& path, const WaveField& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    put<std::int32_t>(out, f.dim);
    put<std::int32_t>(out, f.n_points);
    for (int ax = 0; ax < f.dim; ++ax) put<double>(out, f.box_length[ax]);
    put<double>(out, f.t);
    put<double>(out, f.epsilon);
    for (int j = 0; j < f.psi.size(); ++j) {
        put<double>(out, f.psi[j].real());
        put<double>(out, f.psi[j].imag());
    }
    if (!out) throw IoError("write failed on '" + path + "'");
}

WaveField read_field_dump(const std::string& path, const Vec& box_center) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    const auto d = take<std::int32_t>(in, path);
    if (d < 1 || d > 3) throw IoError("field dump '" + path + "' has unsupported dimension");
    const auto n = take<std::int32_t>(in, path);
    if (box_center.size() != d)
        throw IoError("box center dimension does not match the dump '" + path + "'");
    FieldGridSpec grid;
    grid.box_length.resize(d);
    for (int ax = 0; ax < d; ++ax) grid.box_length[ax] = take<double>(in, path);
    grid.box_center = box_center;
    grid.n_points = n;
    const double t = take<double>(in, path);
    const double epsilon = take<double>(in, path);
    WaveField f = WaveField::make(grid, epsilon);
    f.t = t;
    for (int j = 0; j < f.psi.size(); ++j) {
        const double re = take<double>(in, path);
        const double im = take<double>(in, path);
        f.psi[j] = cplx(re, im);
    }
    return f;
}

// ---------------------------------------------------------------------------
// checksums

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for checksumming");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto got = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return h;
}

// ---------------------------------------------------------------------------
// SVG plots

namespace {

struct Range {
    double lo = 0.0, hi = 1.0;
};

Range data_range(const std::vector<PlotSeries>& series, bool take_y, bool log_scale) {
    Range r{1e300, -1e300};
    for (const auto& s : series) {
        const auto& v = take_y ? s.y : s.x;
        for (double val : v) {
            if (log_scale && !(val > 0.0)) continue;
            const double t = log_scale ? std::log10(val) : val;
            if (!std::isfinite(t)) continue;
            r.lo = std::min(r.lo, t);
            r.hi = std::max(r.hi, t);
        }
    }
    if (r.lo > r.hi) r = {0.0, 1.0};
    if (r.hi - r.lo < 1e-12) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* kPalette[] = {"#1f558b", "#b5542c", "#3d7a3f", "#7a3d72", "#666666"};

}  // namespace

void write_svg_plot(const std::string& path, const PlotSpec& spec) {
    const double W = 640.0, H = 440.0;
    const double ml = 70.0, mr = 20.0, mt = 40.0, mb = 55.0;
    const Range rx = data_range(spec.series, false, spec.log_x);
    const Range ry = data_range(spec.series, true, spec.log_y);
    auto map_x = [&](double x) {
        const double t = spec.log_x ? std::log10(x) : x;
        return ml + (t - rx.lo) / (rx.hi - rx.lo) * (W - ml - mr);
    };
    auto map_y = [&](double y) {
        const double t = spec.log_y ? std::log10(y) : y;
        return H - mb - (t - ry.lo) / (ry.hi - ry.lo) * (H - mt - mb);
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << spec.title << "</text>\n";
    // frame
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
        << "\" height=\"" << H - mt - mb << "\" fill=\"none\" stroke=\"#333\"/>\n";
    // axis labels and end-point ticks
    auto tick_text = [&](double t, bool log_scale) {
        return format_double(log_scale ? std::pow(10.0, t) : t);
    };
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << spec.x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << H / 2 << ")\">" << spec.y_label << "</text>\n";
    out << "<text x=\"" << ml << "\" y=\"" << H - mb + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_text(rx.lo, spec.log_x)
        << "</text>\n";
    out << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 16
        << "\" text-anchor=\"end\" font-size=\"10\">" << tick_text(rx.hi, spec.log_x)
        << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << H - mb
        << "\" text-anchor=\"end\" font-size=\"10\">" << tick_text(ry.lo, spec.log_y)
        << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 10
        << "\" text-anchor=\"end\" font-size=\"10\">" << tick_text(ry.hi, spec.log_y)
        << "</text>\n";

    int color = 0;
    double legend_y = mt + 16.0;
    for (const auto& s : spec.series) {
        const char* stroke = kPalette[color % 5];
        out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (spec.log_x && !(s.x[i] > 0.0)) continue;
            if (spec.log_y && !(s.y[i] > 0.0)) continue;
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            out << px(map_x(s.x[i])) << ',' << px(map_y(s.y[i])) << ' ';
        }
        out << "\"/>\n";
        if (!s.label.empty()) {
            out << "<text x=\"" << W - mr - 8 << "\" y=\"" << legend_y
                << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << stroke << "\">" << s.label
                << "</text>\n";
            legend_y += 14.0;
        }
        ++color;
    }
    if (!spec.annotation.empty())
        out << "<text x=\"" << ml + 8 << "\" y=\"" << H - mb - 8
            << "\" font-size=\"12\">" << spec.annotation << "</text>\n";
    out << "</svg>\n";
    if (!out) throw IoError("write failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// manifest

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void write_manifest(const std::string& directory, const Manifest& m) {
    json root;
    try {
        root["config"] = m.config_echo.empty() ? json::object() : json::parse(m.config_echo);
    } catch (const json::parse_error&) {
        throw IoError("manifest config echo is not valid JSON");
    }
    json files = json::array();
    for (const auto& f : m.files) {
        const std::string fpath = directory + "/" + f.path;
        std::ifstream probe(fpath, std::ios::binary | std::ios::ate);
        if (!probe) throw IoError("manifest entry '" + f.path + "' is missing on disk");
        const auto bytes = static_cast<std::uint64_t>(probe.tellg());
        probe.close();
        json e{{"path", f.path}, {"bytes", bytes}, {"fnv1a64", hex64(file_checksum(fpath))}};
        if (!f.note.empty()) e["note"] = f.note;
        files.push_back(e);
    }
    root["files"] = files;
    json metrics = json::object();
    for (const auto& [k, v] : m.metrics) metrics[k] = v;
    root["metrics"] = metrics;

    const std::string path = directory + "/manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << root.dump(2) << '\n';
    if (!out) throw IoError("write failed on '" + path + "'");
}

Manifest read_manifest(const std::string& directory) {
    const std::string path = directory + "/manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("manifest is not valid JSON: ") + e.what());
    }
    Manifest m;
    m.config_echo = root.value("config", json::object()).dump(2);
    for (const auto& e : root.value("files", json::array())) {
        ManifestEntry f;
        f.path = e.at("path").get<std::string>();
        f.bytes = e.at("bytes").get<std::uint64_t>();
        f.checksum = std::stoull(e.at("fnv1a64").get<std::string>(), nullptr, 16);
        f.note = e.value("note", "");
        m.files.push_back(f);
    }
    if (root.contains("metrics"))
        for (auto it = root["metrics"].begin(); it != root["metrics"].end(); ++it)
            m.metrics.emplace_back(it.key(), it.value().get<double>());
    return m;
}

}  // namespace bloch
