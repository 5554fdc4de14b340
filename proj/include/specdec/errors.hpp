#pragma once

#include <stdexcept>
#include <string>

namespace specdec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A character the toy tokenizer cannot represent.
struct UnknownSymbolError : Error {
    explicit UnknownSymbolError(const std::string& what) : Error(what) {}
};

struct EmptyInputError : Error {
    explicit EmptyInputError(const std::string& what) : Error(what) {}
};

// Attention-mask dimensions disagree with the flattened draft length.
struct MaskShapeMismatchError : Error {
    explicit MaskShapeMismatchError(const std::string& what) : Error(what) {}
};

struct DocParseError : Error {
    DocParseError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), doc_path(path) {}
    std::string doc_path;
};

struct DuplicateToolError : DocParseError {
    using DocParseError::DocParseError;
};

struct DuplicateParamError : DocParseError {
    using DocParseError::DocParseError;
};

// Drafting op called in an FSM state it does not serve.
struct WrongStateError : Error {
    explicit WrongStateError(const std::string& what) : Error(what) {}
};

struct EmptyDraftSetError : Error {
    explicit EmptyDraftSetError(const std::string& what) : Error(what) {}
};

// Datastore insert gate: sequence does not decode to an adherent tool call.
struct NotAdherentError : Error {
    explicit NotAdherentError(const std::string& what) : Error(what) {}
};

struct FileError : Error {
    explicit FileError(const std::string& what) : Error(what) {}
};

struct ParseError : Error {
    ParseError(const std::string& what, long line) : Error(what), line_no(line) {}
    long line_no = 0;
};

}  // namespace specdec
