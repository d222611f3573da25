#pragma once

#include <stdexcept>
#include <string>

namespace ascsim {

/// Base class for all recoverable simulator errors.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Scenario text could not be parsed (bad syntax, unknown key, bad number).
struct ParseError : SimError {
    using SimError::SimError;
};

/// Parsed values violate a documented parameter constraint.
struct ValidationError : SimError {
    using SimError::SimError;
};

/// A fault event in the schedule is malformed (bad target, negative time, ...).
struct InvalidFault : ValidationError {
    using ValidationError::ValidationError;
};

/// The diode-state fixpoint did not settle within the iteration cap.
struct TopologyUnresolvable : SimError {
    explicit TopologyUnresolvable(double t)
        : SimError("topology fixpoint did not converge at t=" + std::to_string(t) + " s"),
          t_s(t) {}
    double t_s;
};

/// A state variable left the finite/sane range; carries the offending time.
struct NonFiniteState : SimError {
    NonFiniteState(double t, const std::string& what_arg)
        : SimError(what_arg + " at t=" + std::to_string(t) + " s"), t_s(t) {}
    double t_s;
};

/// Metrics requested from a trace with no records.
struct EmptyTrace : SimError {
    using SimError::SimError;
};

/// compare() was handed metrics from different plant/fault configurations.
struct IncomparableConfigs : SimError {
    using SimError::SimError;
};

/// Protection FSM asked to make a transition outside the documented order.
/// Logic error: reaching this means a bug, not bad input.
struct IllegalTransition : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace ascsim
