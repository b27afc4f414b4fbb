#pragma once

#include <stdexcept>
#include <string>

namespace catbench {

/// Broad failure class, used by the CLI to pick an exit code.
enum class FailureClass { Validation, Provider, Io };

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, FailureClass cls = FailureClass::Validation)
        : std::runtime_error(what), class_(cls) {}

    [[nodiscard]] FailureClass failure_class() const noexcept { return class_; }

private:
    FailureClass class_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("I/O error: " + what, FailureClass::Io) {}
};

/// Exception carrying a module-specific kind enum.
template <typename Kind>
class KindedError : public Error {
public:
    KindedError(Kind kind, const std::string& what, FailureClass cls = FailureClass::Validation)
        : Error(what, cls), kind_(kind) {}

    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace catbench
