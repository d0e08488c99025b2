#pragma once

#include "breakscope/panel.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testutil {

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path = base / ("breakscope_test_" + std::to_string(counter.fetch_add(1)) + "_" +
                       std::to_string(std::llabs(static_cast<long long>(
                           std::hash<const void*>{}(static_cast<const void*>(this))))));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Hand-built balanced panel with smooth covariates. Countries split into a
// developed first half and developing second half; no EU members.
inline breakscope::PanelDataset tiny_panel(int n_countries, int n_years, int year_first = 2000) {
    breakscope::PanelDataset d;
    d.series = {breakscope::Pollutant::NOx, breakscope::Sector::transport};
    d.year_first = year_first;
    d.year_last = year_first + n_years - 1;
    for (int j = 0; j < n_countries; ++j) {
        breakscope::CountryInfo c;
        char buf[8];
        std::snprintf(buf, sizeof(buf), "T%02d", j % 100);
        c.iso3 = buf;
        c.developed = j < (n_countries + 1) / 2;
        c.eu_member = false;
        d.countries.push_back(c);
    }
    d.emissions.resize(n_countries, n_years);
    d.gdp.resize(n_countries, n_years);
    d.population.resize(n_countries, n_years);
    d.hdd.resize(n_countries, n_years);
    d.cdd.resize(n_countries, n_years);
    for (int j = 0; j < n_countries; ++j) {
        for (int t = 0; t < n_years; ++t) {
            d.emissions(j, t) = 100.0 * std::exp(0.03 * j + 0.01 * t + 0.002 * j * t);
            d.gdp(j, t) = 1e9 * std::exp(0.10 * j + 0.02 * t + 0.001 * t * t * (j % 3));
            d.population(j, t) = 1e6 * std::exp(0.05 * j + 0.005 * t);
            d.hdd(j, t) = 2000.0 * std::exp(0.01 * ((j + t) % 5));
            d.cdd(j, t) = 300.0 * std::exp(0.02 * ((j + 2 * t) % 7));
        }
    }
    d.validate();
    return d;
}

}  // namespace testutil
