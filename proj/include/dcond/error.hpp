#pragma once

#include <stdexcept>
#include <string>

namespace dcond {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (lexicon, LM file, config, model reply).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Word not present in the pronunciation lexicon.
class OutOfVocabulary : public Error {
 public:
  explicit OutOfVocabulary(std::string word)
      : Error("out-of-vocabulary word: " + word), word_(std::move(word)) {}
  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

/// No CTC alignment maps the frames onto the label sequence.
class Unalignable : public Error {
 public:
  using Error::Error;
};

/// File-system or serialization failure; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace dcond
