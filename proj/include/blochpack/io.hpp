#pragma once
// Result persistence: deterministic CSV tables, raw binary field snapshots,
// static SVG line plots, and the run manifest (file list with checksums plus
// the resolved config echo). Identical runs must produce byte-identical
// files, so every number is printed with the same fixed format and nothing
// time- or locale-dependent enters the output.

#include <blochpack/field.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bloch {

// shortest-clean %.17g rendering shared by every text emitter
std::string format_double(double x);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// Raw little-endian snapshot. Layout: int32 d, int32 n_points (per axis),
// f64 box_length[d], f64 t, f64 epsilon, then n_points^d interleaved (re, im)
// f64 pairs in row-major grid order. The box center is not part of the
// layout; it travels in the manifest entry of the dump.
void write_field_dump(const std::string& path, const WaveField& f);
WaveField read_field_dump(const std::string& path, const Vec& box_center);

// FNV-1a, 64-bit
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t file_checksum(const std::string& path);

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

struct PlotSpec {
    std::string title, x_label, y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<PlotSeries> series;
    std::string annotation;  // fitted-slope note drawn inside the frame
};

void write_svg_plot(const std::string& path, const PlotSpec& spec);

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::uint64_t bytes = 0;
    std::uint64_t checksum = 0;
    std::string note;  // free-form, e.g. the box center of a field dump
};

struct Manifest {
    std::string config_echo;  // resolved config JSON text
    std::vector<ManifestEntry> files;
    std::vector<std::pair<std::string, double>> metrics;  // fitted slopes etc.
};

// writes <directory>/manifest.json; entries are checksummed from disk
void write_manifest(const std::string& directory, const Manifest& m);
Manifest read_manifest(const std::string& directory);

}  // namespace bloch
