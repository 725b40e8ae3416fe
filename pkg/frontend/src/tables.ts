// Search/format helpers behind the tool and template tables.

import type { TemplateRecord, ToolRecord } from "./types";

function matches(query: string, ...fields: (string | undefined)[]): boolean {
  const needle = query.trim().toLowerCase();
  if (!needle) return true;
  return fields.some((f) => (f ?? "").toLowerCase().includes(needle));
}

export function filterTools(tools: ToolRecord[], query: string): ToolRecord[] {
  return tools
    .filter((t) => matches(query, t.name, t.category, t.description, t.id))
    .sort((a, b) => a.name.localeCompare(b.name));
}

export function filterTemplates(templates: TemplateRecord[], query: string): TemplateRecord[] {
  return templates
    .filter((t) => matches(query, t.title, t.tags.join(" "), t.id))
    .sort((a, b) => b.usage_count - a.usage_count || a.title.localeCompare(b.title));
}

// draft and validated must be visually distinct at a glance
export function statusBadgeClass(status: string): string {
  switch (status) {
    case "validated":
      return "badge badge-validated";
    case "draft":
      return "badge badge-draft";
    case "deprecated":
      return "badge badge-deprecated";
    default:
      return "badge";
  }
}

export function schemaSummary(schema: Record<string, string>): string {
  return Object.entries(schema)
    .map(([name, type]) => `${name}: ${type}`)
    .join(", ");
}
