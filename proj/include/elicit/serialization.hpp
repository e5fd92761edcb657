#pragma once

#include "elicit/catalog.hpp"
#include "elicit/response.hpp"

#include <json.hpp>

namespace elicit {

/// {"type":"item|attribute|ipa","slate":[ids],"tag"?:id}
nlohmann::json query_to_json(const Query& q, const ItemCatalog& catalog, const Semantics& semantics);
/// Resolves ids against the catalog and semantics; throws InvalidArgument on anything unknown.
Query query_from_json(const nlohmann::json& j, const ItemCatalog& catalog, const Semantics& semantics);

/// {"choice"?:id,"direction"?:+1|-1}
nlohmann::json response_to_json(const Response& r, const ItemCatalog& catalog);
Response response_from_json(const nlohmann::json& j, const ItemCatalog& catalog);

nlohmann::json history_to_json(const History& h, const ItemCatalog& catalog, const Semantics& semantics);
History history_from_json(const nlohmann::json& j, const ItemCatalog& catalog, const Semantics& semantics);

}  // namespace elicit
