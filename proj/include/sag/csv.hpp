#pragma once

#include <map>
#include <string>
#include <vector>

namespace sag {

// 17 significant digits: round-trips any double exactly.
std::string fmt_double(double v);

// CSV with "# key=value" comment lines before the header row. No timestamps
// go into these files; reruns with identical inputs are byte-identical.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    void comment(const std::string& key, const std::string& value);
    void header(const std::vector<std::string>& cols);
    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::string path_;
    std::string buf_;
    std::size_t n_cols_ = 0;
    bool closed_ = false;
};

struct CsvFile {
    std::map<std::string, std::string> meta;  // from "# key=value" lines
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;  // -1 if absent
};

CsvFile read_csv(const std::string& path);

}  // namespace sag
