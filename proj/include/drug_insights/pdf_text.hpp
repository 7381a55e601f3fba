// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace drug_insights {

struct PdfContent {
    std::vector<std::string> pages;
    std::optional<std::string> title;
    std::optional<std::string> author;
};

/// Pluggable PDF text backend used by extract_blocks.
class PdfTextExtractor {
public:
    virtual ~PdfTextExtractor() = default;
    virtual PdfContent extract(std::string_view pdf_bytes) const = 0;
};

/// Baseline extractor for simple single-column text PDFs.
///
/// Objects are located by scanning for "N G obj" (object streams are unpacked
/// too), pages are visited in page-tree order from the catalog, FlateDecode
/// content streams are inflated, and text shown by Tj, TJ, ' and " is emitted
/// with line breaks on Td, TD, T* and Tm moves. A vertical move larger than
/// 1.5 times the line height starts a new paragraph. String bytes are read as
/// Latin-1; encrypted files and CID font encodings are not supported, and
/// multi-column pages come out in content-stream order.
class BasicPdfTextExtractor : public PdfTextExtractor {
public:
    PdfContent extract(std::string_view pdf_bytes) const override;
};

}  // namespace drug_insights
