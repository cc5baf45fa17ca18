#include "sag/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sag {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) : path_(path) {}

void CsvWriter::comment(const std::string& key, const std::string& value) {
    if (n_cols_ != 0) throw std::logic_error("csv: comments must precede the header");
    buf_ += "# " + key + "=" + value + "\n";
}

void CsvWriter::header(const std::vector<std::string>& cols) {
    if (n_cols_ != 0) throw std::logic_error("csv: header already written");
    n_cols_ = cols.size();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cols[i];
    }
    buf_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_) throw std::logic_error("csv: row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cells[i];
    }
    buf_ += '\n';
}

void CsvWriter::close() {
    if (closed_) return;
    std::ofstream os(path_, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path_);
    os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!os) throw std::runtime_error("write failed: " + path_);
    closed_ = true;
}

static std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

CsvFile read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    CsvFile f;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.erase(body.begin());
            const auto eq = body.find('=');
            if (eq != std::string::npos) f.meta[body.substr(0, eq)] = body.substr(eq + 1);
            continue;
        }
        if (!have_header) {
            f.header = split_commas(line);
            have_header = true;
        } else {
            auto cells = split_commas(line);
            if (cells.size() != f.header.size())
                throw std::runtime_error("csv: ragged row in " + path);
            f.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw std::runtime_error("csv: missing header in " + path);
    return f;
}

int CsvFile::col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

}  // namespace sag
