/** CSV export of a range query, mirroring the server CLI's layout:
 * one row per day, blank cells for missing days, a final total row. */

import type { GroupedRangePoint, RangePoint, RangeResult } from "./types";

function cell(value: number | null | undefined): string {
  return value === null || value === undefined ? "" : String(value);
}

function escape(field: string): string {
  if (/[",\n]/.test(field)) {
    return '"' + field.replaceAll('"', '""') + '"';
  }
  return field;
}

export function rangeToCsv(result: RangeResult): string {
  const lines: string[] = [];
  if (result.group_by === null) {
    lines.push(`date,${escape(result.metric)}`);
    for (const point of result.series as RangePoint[]) {
      lines.push(`${point.date},${cell(point.value)}`);
    }
    lines.push(`total,${cell(result.total)}`);
  } else {
    const groups = Object.keys(result.totals ?? {}).sort();
    lines.push(["date", ...groups.map(escape)].join(","));
    for (const point of result.series as GroupedRangePoint[]) {
      const cells = groups.map((g) =>
        cell(point.values ? point.values[g] : null),
      );
      lines.push([point.date, ...cells].join(","));
    }
    lines.push(
      ["total", ...groups.map((g) => cell((result.totals ?? {})[g]))].join(","),
    );
  }
  return lines.join("\n") + "\n";
}
