// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace drug_insights {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// corpus_ingest

class UnreadableSource : public Error {
public:
    using Error::Error;
};

class MalformedBlockRecord : public Error {
public:
    MalformedBlockRecord(std::size_t line, const std::string& what)
        : Error("malformed block record on line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyDocument : public Error {
public:
    using Error::Error;
};

class InvalidChunkParams : public Error {
public:
    using Error::Error;
};

// monograph_structurer

class MissingName : public Error {
public:
    MissingName() : Error("structured output has no NAME line") {}
};

class EmptyRecord : public Error {
public:
    explicit EmptyRecord(std::string name)
        : Error("record '" + name + "' has no section items"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

// providers

/// Transport or protocol failure talking to a model provider. `status` is the
/// last HTTP status seen, or 0 when the request never got a response.
class ProviderError : public Error {
public:
    ProviderError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

class EmptyText : public Error {
public:
    explicit EmptyText(std::size_t index)
        : Error("text at index " + std::to_string(index) + " is empty"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual)
        : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(actual)),
          expected_(expected),
          actual_(actual) {}
    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

// vector_index

class DuplicateInBatch : public Error {
public:
    explicit DuplicateInBatch(const std::string& id)
        : Error("entry id '" + id + "' appears twice in one upsert batch") {}
};

class InvalidEntry : public Error {
public:
    using Error::Error;
};

class CorruptIndex : public Error {
public:
    CorruptIndex(std::uint64_t offset, const std::string& what)
        : Error("corrupt index at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class VersionMismatch : public Error {
public:
    explicit VersionMismatch(std::uint32_t found)
        : Error("unsupported index format version " + std::to_string(found)), found_(found) {}
    std::uint32_t found() const noexcept { return found_; }

private:
    std::uint32_t found_;
};

// prompt_registry / rag_engine

class EmptyQuery : public Error {
public:
    EmptyQuery() : Error("query is empty") {}
};

class UnknownVariant : public Error {
public:
    explicit UnknownVariant(const std::string& id) : Error("unknown prompt variant '" + id + "'") {}
};

class AllCandidatesFailed : public Error {
public:
    explicit AllCandidatesFailed(const std::string& last)
        : Error("every candidate generation failed; last error: " + last) {}
};

// eval_harness

class MalformedItem : public Error {
public:
    MalformedItem(std::size_t line, const std::string& what)
        : Error("malformed eval item on line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class InvalidCategory : public Error {
public:
    InvalidCategory(std::size_t line, const std::string& category)
        : Error("invalid category '" + category + "' on line " + std::to_string(line)), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptySurvey : public Error {
public:
    EmptySurvey() : Error("feedback survey has no responses") {}
};

class OutOfRangeScore : public Error {
public:
    OutOfRangeScore(std::string respondent, std::string question, int score)
        : Error("respondent '" + respondent + "' gave " + std::to_string(score) + " for " + question +
                " (expected 1..5)"),
          respondent_(std::move(respondent)),
          question_(std::move(question)) {}
    const std::string& respondent() const noexcept { return respondent_; }
    const std::string& question() const noexcept { return question_; }

private:
    std::string respondent_;
    std::string question_;
};

}  // namespace drug_insights
