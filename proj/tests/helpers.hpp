#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "ideotrace/hmm.hpp"
#include "ideotrace/topics.hpp"
#include "oracles.hpp"

namespace testing_helpers {

inline ideotrace::topics::DocTopicMatrix to_matrix(const oracle::Rows& rows) {
  ideotrace::topics::DocTopicMatrix m;
  m.weights = ideotrace::Matrix(rows.size(), rows.front().size());
  for (std::size_t d = 0; d < rows.size(); ++d) {
    m.doc_ids.push_back("d" + std::to_string(d));
    for (std::size_t t = 0; t < rows[d].size(); ++t) m.weights(d, t) = rows[d][t];
  }
  for (std::size_t t = 0; t < rows.front().size(); ++t) m.topic_ids.push_back(static_cast<int>(t));
  return m;
}

inline ideotrace::Matrix to_matrix_rows(const oracle::Rows& rows) {
  ideotrace::Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

inline ideotrace::hmm::Hmm to_hmm(const oracle::Model& o) {
  return {o.initial, to_matrix_rows(o.transition), to_matrix_rows(o.emission)};
}

inline ideotrace::hmm::Hmm make_hmm(std::vector<double> initial, const oracle::Rows& transition,
                                    const oracle::Rows& emission) {
  return {std::move(initial), to_matrix_rows(transition), to_matrix_rows(emission)};
}

}  // namespace testing_helpers
