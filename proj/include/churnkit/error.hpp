#pragma once

#include <stdexcept>
#include <string>

namespace churnkit {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IdentificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace churnkit
