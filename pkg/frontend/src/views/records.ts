// The stored-records table: the thirteen intake columns straight from the
// committed chain state, with each row's provenance trail.

import { Session, listRecords, ApiError } from "../api.js";
import { RECORD_FIELDS } from "../canonical.js";
import { banner, clear, el, shortHash } from "../dom.js";

const HEADINGS = [
  "ID", "Name", "Date of Birth", "Gender", "Age", "Blood Pressure",
  "Medication Taken", "Visit Date", "Consulted Prescriber", "Temperature",
  "Height", "Weight", "Contact No.", "History",
];

export function renderRecords(root: HTMLElement, session: () => Session | null): void {
  clear(root);
  const status = el("div");
  const tableBox = el("div", { class: "table-box" });
  const refresh = el("button", {}, ["Refresh"]);

  async function load(): Promise<void> {
    clear(status);
    clear(tableBox);
    const active = session();
    if (!active) {
      status.append(banner("error", "Import a session key first."));
      return;
    }
    try {
      const records = await listRecords(active);
      if (!records.length) {
        status.append(banner("info", "No records committed yet."));
        return;
      }
      const head = el("tr", {}, HEADINGS.map((h) => el("th", {}, [h])));
      const rows = records.map((entry) =>
        el("tr", {}, [
          ...RECORD_FIELDS.map((field) => el("td", {}, [entry.record[field] ?? ""])),
          el("td", { class: "mono" }, [
            `${entry.provenance.length} tx: ` +
              entry.provenance.map((h) => shortHash(h, 10)).join(", "),
          ]),
        ]),
      );
      tableBox.append(el("table", { class: "grid" }, [head, ...rows]));
    } catch (error) {
      const message = error instanceof ApiError ? error.message : String(error);
      status.append(banner("error", message));
    }
  }

  refresh.addEventListener("click", () => void load());
  root.append(el("h2", {}, ["Stored records"]), refresh, status, tableBox);
  void load();
}
