#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace evomerge {

struct LogRow {
    std::string run_id;
    std::size_t generation = 0;
    std::size_t individual_index = 0;
    std::vector<double> genotype;
    std::vector<double> objectives;  // user-facing sign
    std::vector<std::string> estimators;
    std::string checkpoint_hash;
    double wall_ms = 0.0;
    std::string status;
};

// Shortest decimal that reads back as the same double; "inf", "-inf", "nan"
// for non-finite values.
std::string format_double(double value);
// Genotype cell: semicolon-joined, 9 significant digits.
std::string format_genotype(const std::vector<double>& genes);

// Appends evaluation rows to a CSV file and a JSON Lines mirror. The header
// is written with the first row and both files are flushed after every row.
class RunLogger {
public:
    RunLogger(std::filesystem::path csv_path, std::filesystem::path jsonl_path, std::vector<std::string> objective_names);

    void log(const LogRow& row);

    std::vector<std::string> columns() const;
    std::size_t rows_written() const { return rows_; }
    const std::filesystem::path& csv_path() const { return csv_path_; }
    const std::filesystem::path& jsonl_path() const { return jsonl_path_; }

private:
    std::filesystem::path csv_path_;
    std::filesystem::path jsonl_path_;
    std::vector<std::string> objective_names_;
    std::ofstream csv_;
    std::ofstream jsonl_;
    std::size_t rows_ = 0;
};

// Splits one CSV line written by RunLogger (quoted fields allowed).
std::vector<std::string> split_log_line(const std::string& line);

}  // namespace evomerge
