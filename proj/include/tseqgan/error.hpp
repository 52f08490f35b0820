#pragma once

#include <stdexcept>
#include <string>

namespace tseqgan {

// Exit-code families used by the CLI: contract/data errors map to 2,
// numeric failures to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DomainError : public ContractError {
 public:
  using ContractError::ContractError;
};

class FormatError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Bad configuration or command-line input (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tseqgan
