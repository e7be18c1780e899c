"use strict";

const $ = (id) => document.getElementById(id);
let caseId = null;
let sessionId = null;

function status(text, isError) {
  $("status").textContent = text;
  $("status").className = isError ? "error" : "";
}

async function call(url, options) {
  const resp = await fetch(url, options);
  const body = resp.headers.get("content-type")?.includes("json") ? await resp.json() : null;
  if (!resp.ok) {
    const stage = body?.stage ? ` (stage ${body.stage})` : "";
    throw new Error(`${resp.status} ${body?.error ?? ""}${stage}: ${body?.message ?? ""}`);
  }
  return body;
}

function paragraph(parent, text, cls) {
  const p = document.createElement("p");
  p.textContent = text;
  if (cls) p.className = cls;
  parent.appendChild(p);
}

$("upload-form").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  try {
    status("Uploading...");
    const body = await call("/api/cases", { method: "POST", body: new FormData(ev.target) });
    caseId = body.case_id;
    $("report").hidden = false;
    status(`Case ${caseId} uploaded.`);
  } catch (e) {
    status(e.message, true);
  }
});

$("generate").addEventListener("click", async () => {
  try {
    status("Generating report...");
    $("generate").disabled = true;
    const r = await call(`/api/cases/${caseId}/report`, { method: "POST" });
    sessionId = r.session_id;
    $("summary").textContent = `Grade: ${r.grade}. Cup-to-disc ratio: ${r.cdr_display}. Roles: ${r.roles.join(", ")}.`;
    $("final").textContent = "";
    r.final_report_markdown.split(/\n{2,}/).forEach((block) => paragraph($("final"), block));
    for (const s of r.sub_reports) {
      paragraph($("specialists"), s.role, "role");
      paragraph($("specialists"), s.text);
    }
    $("pdf").href = `/api/cases/${caseId}/pdf`;
    $("pdf").hidden = false;
    $("chat").hidden = false;
    status("Report ready.");
  } catch (e) {
    $("generate").disabled = false;
    status(e.message, true);
  }
});

$("chat-form").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  const input = ev.target.question;
  const question = input.value;
  try {
    status("Waiting for answer...");
    const r = await call(`/api/sessions/${sessionId}/chat`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question }),
    });
    for (const [label, text] of [["Q", question], ["A", r.answer]]) {
      const li = document.createElement("li");
      li.textContent = `${label}: ${text}`;
      $("transcript").appendChild(li);
    }
    input.value = "";
    status("");
  } catch (e) {
    status(e.message, true);
  }
});
