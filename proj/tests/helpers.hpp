#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cmr/corpus.hpp"
#include "cmr/lda.hpp"

namespace test {

inline cmr::SparseDoc make_doc(std::vector<std::pair<int, int>> entries) {
    cmr::SparseDoc doc;
    doc.entries = std::move(entries);
    for (const auto& [w, c] : doc.entries) doc.total_tokens += c;
    return doc;
}

// Greedy max-overlap alignment of fitted topic rows to reference rows;
// returns the mean per-topic L1 distance after alignment.
inline double aligned_mean_l1(const Eigen::MatrixXd& fitted, const Eigen::MatrixXd& reference) {
    const int k = static_cast<int>(reference.rows());
    std::vector<bool> used_fit(k, false), used_ref(k, false);
    double total_l1 = 0.0;
    for (int step = 0; step < k; ++step) {
        double best_overlap = -1.0;
        int best_f = -1, best_r = -1;
        for (int f = 0; f < k; ++f) {
            if (used_fit[f]) continue;
            for (int r = 0; r < k; ++r) {
                if (used_ref[r]) continue;
                const double overlap = fitted.row(f).cwiseMin(reference.row(r)).sum();
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    best_f = f;
                    best_r = r;
                }
            }
        }
        used_fit[best_f] = true;
        used_ref[best_r] = true;
        total_l1 += (fitted.row(best_f) - reference.row(best_r)).cwiseAbs().sum();
    }
    return total_l1 / k;
}

// Exact collapsed posterior over all K^N topic assignments of a single
// document. joint[code] indexes assignments by code = sum_i z_i * K^i;
// marginals is N x K. Oracle for the sampler.
struct EnumeratedPosterior {
    Eigen::VectorXd joint;
    Eigen::MatrixXd marginals;
};

inline EnumeratedPosterior enumerate_posterior(const std::vector<int>& words, int topics,
                                               int vocab_size, double alpha, double beta) {
    const int n = static_cast<int>(words.size());
    long total = 1;
    for (int i = 0; i < n; ++i) total *= topics;

    EnumeratedPosterior post;
    post.joint = Eigen::VectorXd::Zero(total);
    post.marginals = Eigen::MatrixXd::Zero(n, topics);
    std::vector<int> z(n);
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = 0; i < n; ++i) {
            z[i] = static_cast<int>(c % topics);
            c /= topics;
        }
        // Collapsed joint for one document:
        //   prod_k Gamma(alpha + n_k) / Gamma(alpha)
        //   * prod_k [Gamma(V beta) / Gamma(V beta + n_k)
        //             * prod_w Gamma(beta + n_kw) / Gamma(beta)]
        Eigen::VectorXi doc_counts = Eigen::VectorXi::Zero(topics);
        Eigen::MatrixXi word_counts = Eigen::MatrixXi::Zero(topics, vocab_size);
        for (int i = 0; i < n; ++i) {
            doc_counts[z[i]] += 1;
            word_counts(z[i], words[i]) += 1;
        }
        double log_p = 0.0;
        for (int k = 0; k < topics; ++k) {
            log_p += std::lgamma(alpha + doc_counts[k]) - std::lgamma(alpha);
            log_p += std::lgamma(vocab_size * beta) - std::lgamma(vocab_size * beta + doc_counts[k]);
            for (int w = 0; w < vocab_size; ++w) {
                log_p += std::lgamma(beta + word_counts(k, w)) - std::lgamma(beta);
            }
        }
        post.joint[code] = std::exp(log_p);
    }
    post.joint /= post.joint.sum();
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = 0; i < n; ++i) {
            post.marginals(i, static_cast<int>(c % topics)) += post.joint[code];
            c /= topics;
        }
    }
    return post;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        dir_ = std::filesystem::temp_directory_path() /
               ("cmr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace test
