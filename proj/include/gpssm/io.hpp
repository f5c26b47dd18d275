#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gpssm/model.hpp"
#include "gpssm/pgas.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Dataset CSV: header "t,u_1..u_{n_u},y_1..y_{n_y}[,x_1..x_{n_x}][,f_1..f_{n_x}]",
// UTF-8, '.' decimal, one row per time index 0..T.
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(const std::string& path);

// Model + sampler configuration as JSON.
GpSsmModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const GpSsmModel& model);
PgasConfig pgas_config_from_json(const nlohmann::json& j);
nlohmann::json pgas_config_to_json(const PgasConfig& config);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// Chain records as JSON lines, one object per iteration:
// {"iteration": .., "theta": {name: log value, ..}, "trajectory": [[..]..],
//  "log_joint": ..}. Appendable and resumable from the last record.
nlohmann::json chain_sample_to_json(const ChainSample& s);
ChainSample chain_sample_from_json(const nlohmann::json& j, Index n_x, Index n_in);
void append_chain_sample(std::ostream& os, const ChainSample& s);
std::vector<ChainSample> read_chain_jsonl(const std::string& path, Index n_x, Index n_in);

}  // namespace gpssm
