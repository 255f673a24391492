#pragma once

#include <stdexcept>
#include <string>

namespace vcloze {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or arguments. The CLI maps this to exit status 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unreadable or unwritable files. The CLI maps this to exit status 2.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vcloze
