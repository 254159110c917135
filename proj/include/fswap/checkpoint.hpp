#ifndef FSWAP_CHECKPOINT_HPP
#define FSWAP_CHECKPOINT_HPP

#include <map>
#include <string>
#include <vector>

#include "fswap/nn.hpp"

namespace fswap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned binary blob: format-version + configuration hash in the header,
// string metadata, then named double arrays (parameters, optimizer state).
class Checkpoint {
public:
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t config_hash = 0;
    std::map<std::string, std::string> meta;

    void add_array(const std::string& name, Tensor t);
    bool has_array(const std::string& name) const;
    const Tensor& array(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& arrays() const { return arrays_; }

    void add_store(const std::string& prefix, const ParamStore& ps);
    // Copies values into existing parameters by name; shapes must match.
    void load_into_store(const std::string& prefix, ParamStore& ps) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    std::vector<std::pair<std::string, Tensor>> arrays_;
};

}  // namespace fswap

#endif
