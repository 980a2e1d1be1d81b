// Patient intake form: one input per record field, client-side validation
// mirroring the server's rules, and a receipt with an explorer link.

import { Session, submitRecord, ApiError } from "../api.js";
import {
  PatientRecord,
  RECORD_FIELDS,
  emptyRecord,
  validateRecord,
} from "../canonical.js";
import { banner, clear, el } from "../dom.js";

const LABELS: Record<string, string> = {
  patient_id: "ID",
  name: "Name",
  date_of_birth: "Date of Birth",
  gender: "Gender",
  age: "Age",
  blood_pressure: "Blood Pressure",
  medication_taken: "Medication Taken",
  visit_date: "Visit Date",
  consulted_prescriber: "Consulted Prescriber",
  temperature: "Temperature",
  height: "Height",
  weight: "Weight",
  contact_no: "Contact No.",
};

export function renderForm(
  root: HTMLElement,
  session: () => Session | null,
  onSubmitted: (txHash: string) => void,
): void {
  clear(root);
  const status = el("div");
  const inputs = new Map<string, HTMLInputElement>();
  const fieldBoxes: HTMLElement[] = [];
  for (const field of RECORD_FIELDS) {
    const input = el("input", { type: "text", name: field });
    inputs.set(field, input);
    const issue = el("span", { class: "field-issue" });
    fieldBoxes.push(el("label", { class: "field" }, [LABELS[field] ?? field, input, issue]));
  }

  const submit = el("button", { type: "submit" }, ["Create patient"]);
  const form = el("form", { class: "patient-form" }, [...fieldBoxes, submit]);

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    clear(status);
    const active = session();
    if (!active) {
      status.append(banner("error", "Import a session key first."));
      return;
    }
    const record = emptyRecord();
    for (const field of RECORD_FIELDS) {
      record[field] = inputs.get(field)?.value.trim() ?? "";
    }
    const issues = validateRecord(record);
    for (const box of fieldBoxes) {
      const note = box.querySelector(".field-issue") as HTMLElement;
      note.textContent = "";
    }
    let blocked = false;
    for (const issue of issues) {
      const input = inputs.get(issue.field);
      const note = input?.parentElement?.querySelector(".field-issue") as HTMLElement | null;
      if (note) note.textContent = `${issue.rule}${issue.severity === "warning" ? " (stored anyway)" : ""}`;
      if (issue.severity === "error") blocked = true;
    }
    if (blocked) return; // hard violations never leave the browser

    submit.setAttribute("disabled", "disabled");
    try {
      const receipt = await submitRecord(active, record as PatientRecord, "create");
      const link = el("a", { href: "#", class: "tx-link" }, [receipt.tx_hash]);
      link.addEventListener("click", (e) => {
        e.preventDefault();
        onSubmitted(receipt.tx_hash);
      });
      status.append(
        banner("ok", "Accepted for commit. Transaction hash:"),
        el("div", { class: "receipt" }, [link]),
      );
      if (receipt.warnings.length) {
        status.append(
          banner(
            "info",
            "Stored with warnings: " +
              receipt.warnings.map((w) => `${w.field}: ${w.rule}`).join("; "),
          ),
        );
      }
      form.reset();
    } catch (error) {
      if (error instanceof ApiError) {
        status.append(banner("error", `Rejected: ${error.message}`));
      } else {
        status.append(banner("error", `Network failure: ${String(error)} — retry when the node is reachable.`));
      }
    } finally {
      submit.removeAttribute("disabled");
    }
  });

  root.append(el("h2", {}, ["New patient"]), form, status);
}
