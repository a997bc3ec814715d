/** Case lifecycle DAGs, mirrored from the server.
 *
 * The queue renders only these edges as buttons, so an invalid transition
 * is unclickable rather than an error after the fact.
 */

const SOS: Record<string, string[]> = {
  open: ["acknowledged", "closed"],
  acknowledged: ["responding", "closed"],
  responding: ["closed"],
  closed: [],
};

const REPORT: Record<string, string[]> = {
  submitted: ["acknowledged", "dismissed"],
  acknowledged: ["in_progress", "dismissed"],
  in_progress: ["resolved"],
  resolved: [],
  dismissed: [],
};

export function validNextStatuses(kind: "sos" | "report", status: string): string[] {
  const table = kind === "sos" ? SOS : REPORT;
  return table[status] ?? [];
}

export function isTerminal(kind: "sos" | "report", status: string): boolean {
  return validNextStatuses(kind, status).length === 0;
}
