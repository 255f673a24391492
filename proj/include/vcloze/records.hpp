#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vcloze/qa_generator.hpp"

namespace vcloze {

using nlohmann::json;

json to_json(const KnobConfig& knobs);
// Missing keys keep their defaults; knob values may be given as "1,0,1" or [1,0,1].
KnobConfig knob_config_from_json(const json& j, KnobConfig base = {});

// Parses "1,0,1" into k1, k2, k3 of `knobs`.
void parse_knob_tuple(std::string_view text, KnobConfig& knobs);

json to_json(const QuestionRecord& record);
QuestionRecord record_from_json(const json& j);

// One compact JSON object per line, in dataset order.
void write_jsonl(std::ostream& out, std::span<const QuestionRecord> records);
std::string to_jsonl(std::span<const QuestionRecord> records);
std::vector<QuestionRecord> read_jsonl(std::istream& in, std::string_view source_name = "<stream>");
std::vector<QuestionRecord> load_jsonl(const std::filesystem::path& path);

// Rebuilds a dataset from records; task and mode come from the first record.
Dataset dataset_from_records(std::vector<QuestionRecord> records, const KnobConfig& base = {});

// Writes via a sibling temp file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::size_t fallback_count(const Dataset& ds);

}  // namespace vcloze
