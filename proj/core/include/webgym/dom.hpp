#pragma once

#include <string>
#include <utility>
#include <vector>

namespace webgym {

// One element of a simulated page. element_id values are assigned in
// depth-first document order, consecutive from 0, by assign_element_ids().
struct DomNode {
    std::string tag;
    std::vector<std::pair<std::string, std::string>> attributes; // insertion-ordered, keys unique
    std::string text_content;
    int element_id = -1;
    std::vector<DomNode> children;

    void set_attr(const std::string& key, const std::string& value);
    const std::string* attr(const std::string& key) const;
};

// Walks the tree depth-first and numbers every node from 0. Returns the
// number of nodes visited.
int assign_element_ids(DomNode& root, int first_id = 0);

// Serializes the tree as single-line HTML-ish text with the element_id
// embedded as an id="N" attribute on every node. Pure function of the tree.
std::string render_dom(const DomNode& root);

DomNode* find_by_id(DomNode& root, int element_id);
const DomNode* find_by_id(const DomNode& root, int element_id);

// Depth-first visit; callback returns false to stop early.
template <typename F>
bool visit_dom(const DomNode& node, F&& fn) {
    if (!fn(node)) return false;
    for (const auto& child : node.children)
        if (!visit_dom(child, fn)) return false;
    return true;
}

} // namespace webgym
