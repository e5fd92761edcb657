#include "elicit/serialization.hpp"

namespace elicit {

nlohmann::json query_to_json(const Query& q, const ItemCatalog& catalog, const Semantics& semantics) {
  nlohmann::json j{{"type", to_string(q.type)}};
  auto& slate = j["slate"] = nlohmann::json::array();
  for (auto i : q.slate) slate.push_back(catalog.id(i));
  if (q.tag) j["tag"] = semantics[*q.tag].tag;
  return j;
}

Query query_from_json(const nlohmann::json& j, const ItemCatalog& catalog, const Semantics& semantics) {
  if (!j.is_object()) throw InvalidArgument("query must be a JSON object");
  Query q;
  try {
    q.type = query_type_from_string(j.at("type").get<std::string>());
    for (const auto& id : j.at("slate")) {
      const auto idx = catalog.find(id.get<std::string>());
      if (!idx) throw InvalidArgument("unknown item '" + id.get<std::string>() + "'");
      q.slate.push_back(*idx);
    }
    if (j.contains("tag") && !j["tag"].is_null()) {
      const auto name = j["tag"].get<std::string>();
      q.tag = semantics.find(name);
      if (!q.tag) throw InvalidArgument("unknown tag '" + name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed query: ") + e.what());
  }
  validate_query(q, catalog, semantics.size());
  return q;
}

nlohmann::json response_to_json(const Response& r, const ItemCatalog& catalog) {
  nlohmann::json j = nlohmann::json::object();
  if (r.choice) j["choice"] = catalog.id(*r.choice);
  if (r.direction != 0) j["direction"] = r.direction;
  return j;
}

Response response_from_json(const nlohmann::json& j, const ItemCatalog& catalog) {
  if (!j.is_object()) throw InvalidArgument("response must be a JSON object");
  Response r;
  try {
    if (j.contains("choice") && !j["choice"].is_null()) {
      const auto id = j["choice"].get<std::string>();
      const auto idx = catalog.find(id);
      if (!idx) throw InvalidArgument("unknown item '" + id + "'");
      r.choice = *idx;
    }
    if (j.contains("direction") && !j["direction"].is_null()) {
      const auto& d = j["direction"];
      if (d.is_string()) {
        const auto s = d.get<std::string>();
        if (s == "more" || s == "+1" || s == "+") r.direction = 1;
        else if (s == "less" || s == "-1" || s == "-") r.direction = -1;
        else throw InvalidArgument("direction must be +1/-1 or more/less");
      } else {
        r.direction = d.get<int>();
        if (r.direction != 1 && r.direction != -1) throw InvalidArgument("direction must be +1 or -1");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed response: ") + e.what());
  }
  return r;
}

nlohmann::json history_to_json(const History& h, const ItemCatalog& catalog, const Semantics& semantics) {
  auto out = nlohmann::json::array();
  for (const auto& e : h)
    out.push_back({{"query", query_to_json(e.query, catalog, semantics)}, {"response", response_to_json(e.response, catalog)}});
  return out;
}

History history_from_json(const nlohmann::json& j, const ItemCatalog& catalog, const Semantics& semantics) {
  History h;
  for (const auto& e : j) {
    HistoryEntry entry{query_from_json(e.at("query"), catalog, semantics), response_from_json(e.at("response"), catalog)};
    validate_response(entry.query, entry.response);
    h.push_back(std::move(entry));
  }
  return h;
}

}  // namespace elicit
