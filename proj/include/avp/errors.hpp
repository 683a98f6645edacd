#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avp {

// All pipeline failures carry a stable machine-parsable class id next to the
// human-readable message. The CLI prints "error: <class>: <message>".
class Error : public std::runtime_error {
public:
    Error(std::string_view class_id, std::string_view message)
        : std::runtime_error(std::string(class_id) + ": " + std::string(message)),
          class_id_(class_id), message_(message) {}

    const std::string& class_id() const noexcept { return class_id_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string class_id_;
    std::string message_;
};

[[noreturn]] inline void fail(std::string_view class_id, std::string_view message) {
    throw Error(class_id, message);
}

} // namespace avp
