// Input widgets generated from the engine's INPUT declarations.

import type { InputDescriptor } from "./types.js";

export type CommitHandler = (name: string, value: unknown) => void;

const INTERVAL_UNITS = ["MINUTE", "HOUR", "DAY", "WEEK", "MONTH", "YEAR"];

/**
 * Build the control for one declared input: VARCHAR gets a text field,
 * INTERVAL a duration picker, numbers a number field, FILE a file picker
 * that uploads into the engine's fixture store. An empty commit posts
 * NULL (show-all).
 */
export function buildInputWidget(
  decl: InputDescriptor,
  onCommit: CommitHandler,
  onUpload?: (name: string, contentB64: string) => Promise<string>,
): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "input-widget";
  wrap.dataset.input = decl.name;
  wrap.dataset.type = decl.type;
  const caption = document.createElement("span");
  caption.textContent = decl.name;
  wrap.appendChild(caption);

  const commitText = (raw: string) => onCommit(decl.name, raw === "" ? null : raw);

  switch (decl.type) {
    case "BIGINT":
    case "DOUBLE": {
      const field = document.createElement("input");
      field.type = "number";
      if (decl.type === "BIGINT") field.step = "1";
      if (decl.value !== null && decl.value !== undefined) field.value = String(decl.value);
      field.addEventListener("change", () => {
        if (field.value === "") return onCommit(decl.name, null);
        const parsed = decl.type === "BIGINT" ? parseInt(field.value, 10) : parseFloat(field.value);
        if (!Number.isNaN(parsed)) onCommit(decl.name, parsed);
      });
      wrap.appendChild(field);
      return wrap;
    }
    case "INTERVAL": {
      const amount = document.createElement("input");
      amount.type = "number";
      amount.min = "0";
      amount.step = "1";
      amount.className = "interval-amount";
      const unit = document.createElement("select");
      for (const u of INTERVAL_UNITS) {
        const option = document.createElement("option");
        option.value = u;
        option.textContent = u.toLowerCase() + "s";
        if (u === "DAY") option.selected = true;
        unit.appendChild(option);
      }
      const commit = () => {
        if (amount.value === "") return onCommit(decl.name, null);
        onCommit(decl.name, `${parseInt(amount.value, 10)} ${unit.value}`);
      };
      amount.addEventListener("change", commit);
      unit.addEventListener("change", commit);
      wrap.append(amount, unit);
      return wrap;
    }
    case "BOOLEAN": {
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = decl.value === true;
      box.addEventListener("change", () => onCommit(decl.name, box.checked));
      wrap.appendChild(box);
      return wrap;
    }
    case "TIMESTAMP": {
      const field = document.createElement("input");
      field.type = "datetime-local";
      field.addEventListener("change", () => {
        commitText(field.value === "" ? "" : field.value.replace("T", " "));
      });
      wrap.appendChild(field);
      return wrap;
    }
    case "FILE": {
      const picker = document.createElement("input");
      picker.type = "file";
      picker.addEventListener("change", async () => {
        const file = picker.files?.[0];
        if (!file || !onUpload) return;
        const buffer = new Uint8Array(await file.arrayBuffer());
        let binary = "";
        buffer.forEach((b) => (binary += String.fromCharCode(b)));
        const uri = await onUpload(file.name, btoa(binary));
        onCommit(decl.name, uri);
      });
      wrap.appendChild(picker);
      return wrap;
    }
    default: {
      // VARCHAR and anything else: a plain text field
      const field = document.createElement("input");
      field.type = "text";
      field.placeholder = "(all)";
      if (typeof decl.value === "string") field.value = decl.value;
      field.addEventListener("change", () => commitText(field.value));
      field.addEventListener("keydown", (ev) => {
        if ((ev as KeyboardEvent).key === "Enter") commitText(field.value);
      });
      wrap.appendChild(field);
      return wrap;
    }
  }
}

/**
 * Reconcile the widget strip with the engine's current declarations; the
 * set of rendered widgets always equals the latest generation's inputs.
 */
export function syncWidgets(
  container: HTMLElement,
  inputs: InputDescriptor[],
  onCommit: CommitHandler,
  onUpload?: (name: string, contentB64: string) => Promise<string>,
): void {
  const wanted = new Set(inputs.map((d) => d.name));
  for (const child of Array.from(container.children)) {
    const name = (child as HTMLElement).dataset.input;
    if (name === undefined || !wanted.has(name)) child.remove();
  }
  const existing = new Set(
    Array.from(container.children).map((c) => (c as HTMLElement).dataset.input),
  );
  for (const decl of inputs) {
    if (!existing.has(decl.name)) {
      container.appendChild(buildInputWidget(decl, onCommit, onUpload));
    }
  }
}
