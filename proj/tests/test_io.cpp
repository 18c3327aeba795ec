#include <blochpack/config.hpp>
#include <blochpack/errors.hpp>
#include <blochpack/io.hpp>

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace bloch;

namespace {

std::string scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "blochpack_io_tests";
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("doubles render compactly and round trip exactly") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-3.0) == "-3");
    for (double x : {1.0 / 3.0, 0.1, 1e-300, 6.02214076e23, -9.109e-31}) {
        const std::string s = format_double(x);
        CHECK(std::strtod(s.c_str(), nullptr) == x);
    }
    CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("csv tables write deterministically and read back exactly") {
    const std::string dir = scratch_dir();
    CsvTable t;
    t.header = {"epsilon", "error", "gap"};
    t.rows = {{0.0625, 1.0 / 3.0, std::nan("")}, {0.03125, 1e-300, -2.5}};

    const std::string p1 = dir + "/a.csv";
    const std::string p2 = dir + "/b.csv";
    write_csv(p1, t);
    write_csv(p2, t);
    CHECK(file_checksum(p1) == file_checksum(p2));

    const CsvTable back = read_csv(p1);
    REQUIRE(back.header == t.header);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (std::isnan(t.rows[r][c]))
                CHECK(std::isnan(back.rows[r][c]));
            else
                CHECK(back.rows[r][c] == t.rows[r][c]);
        }

    CsvTable ragged = t;
    ragged.rows.push_back({1.0});
    CHECK_THROWS_AS(write_csv(dir + "/bad.csv", ragged), IoError);

    {
        std::ofstream out(dir + "/text.csv", std::ios::binary);
        out << "a,b\n1.0,oops\n";
    }
    CHECK_THROWS_AS(read_csv(dir + "/text.csv"), IoError);
    CHECK_THROWS_AS(read_csv(dir + "/absent.csv"), IoError);
}

TEST_CASE("field snapshots round trip bit for bit") {
    const std::string dir = scratch_dir();
    FieldGridSpec spec;
    spec.box_length = Vec::Constant(1, 4.0);
    spec.box_center = Vec::Constant(1, 0.5);
    spec.n_points = 16;
    WaveField f = WaveField::make(spec, 0.0625);
    f.t = 0.75;
    for (int j = 0; j < f.size(); ++j)
        f.psi[j] = cplx(std::sin(0.1 * j) * 1e-7, std::cos(0.2 * j));

    const std::string path = dir + "/field.bin";
    write_field_dump(path, f);
    const WaveField g = read_field_dump(path, spec.box_center);
    CHECK(g.dim == f.dim);
    CHECK(g.n_points == f.n_points);
    CHECK(g.t == f.t);
    CHECK(g.epsilon == f.epsilon);
    CHECK(g.box_length[0] == f.box_length[0]);
    REQUIRE(g.psi.size() == f.psi.size());
    for (int j = 0; j < f.size(); ++j) CHECK(g.psi[j] == f.psi[j]);

    // truncation and dimension mismatches are refused
    const std::string data = slurp(path);
    {
        std::ofstream out(dir + "/cut.bin", std::ios::binary);
        out.write(data.data(), static_cast<std::streamsize>(data.size() - 9));
    }
    CHECK_THROWS_AS(read_field_dump(dir + "/cut.bin", spec.box_center), IoError);
    CHECK_THROWS_AS(read_field_dump(path, Vec::Zero(2)), IoError);
}

TEST_CASE("the checksum matches the frozen fnv-1a vectors") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("hello", 5) == 0xa430d84680aabd0bull);

    const std::string dir = scratch_dir();
    const std::string path = dir + "/sum.txt";
    {
        std::ofstream out(path, std::ios::binary);
        out << "hello";
    }
    CHECK(file_checksum(path) == 0xa430d84680aabd0bull);
}

TEST_CASE("svg plots carry the series and the annotation") {
    const std::string dir = scratch_dir();
    PlotSpec spec;
    spec.title = "corrector scaling";
    spec.x_label = "epsilon";
    spec.y_label = "error";
    spec.log_x = true;
    spec.log_y = true;
    spec.series.push_back({"corrected", {0.0625, 0.03125, 0.015625}, {1e-2, 5e-3, 2.4e-3}});
    spec.series.push_back({"leading", {0.0625, 0.03125, -1.0}, {3e-2, 2e-2, 1e-2}});
    spec.annotation = "slope 1.04";
    const std::string path = dir + "/plot.svg";
    write_svg_plot(path, spec);

    const std::string svg = slurp(path);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("corrector scaling") != std::string::npos);
    CHECK(svg.find("slope 1.04") != std::string::npos);
    CHECK(svg.find("corrected") != std::string::npos);
    // the negative abscissa cannot appear on a log axis
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(svg.find("inf") == std::string::npos);
}

TEST_CASE("manifests checksum their files from disk and read back") {
    const std::string dir = scratch_dir() + "/run";
    std::filesystem::create_directories(dir);
    CsvTable t;
    t.header = {"x"};
    t.rows = {{1.0}, {2.0}};
    write_csv(dir + "/table.csv", t);

    Manifest m;
    m.config_echo = resolved_config_json(named_scenario("free"));
    ManifestEntry e;
    e.path = "table.csv";
    e.note = "toy table";
    m.files.push_back(e);
    m.metrics.emplace_back("slope", 1.0 / 3.0);
    write_manifest(dir, m);

    const Manifest back = read_manifest(dir);
    REQUIRE(back.files.size() == 1);
    CHECK(back.files[0].path == "table.csv");
    CHECK(back.files[0].note == "toy table");
    CHECK(back.files[0].bytes == std::filesystem::file_size(dir + "/table.csv"));
    CHECK(back.files[0].checksum == file_checksum(dir + "/table.csv"));
    REQUIRE(back.metrics.size() == 1);
    CHECK(back.metrics[0].first == "slope");
    CHECK(back.metrics[0].second == 1.0 / 3.0);
    // the embedded echo is still a loadable config
    CHECK(parse_config_text(back.config_echo).name == "free");

    Manifest missing = m;
    missing.files[0].path = "ghost.csv";
    CHECK_THROWS_AS(write_manifest(dir, missing), IoError);
}
