# coding: utf-8

# # From sixteen intensities to a four-step sequence
#
# A record holds, for each expression video, its score against every class.
# Group j is video j's four scores; the interesting value in each group is the
# one on the diagonal, the video's score for its own expression.

# In[1]:

import numpy as np

from hypomimia.features import IntensityRecord, STAT_FIELDS, assemble_sequence, group, process_record

values = np.array([
    4.0, 1.0, 0.8, 1.2,
    1.1, 5.0, 0.9, 1.0,
    0.7, 1.0, 2.5, 1.3,
    1.0, 1.4, 0.6, 3.0,
])
record = IntensityRecord(values, "demo", "HC")
print(group(record))

# Each group gets eight statistics centred on its highlight value.

# In[2]:

print("group  " + "  ".join(f"{n:>7}" for n in STAT_FIELDS))
for s in process_record(record):
    print(f"{s.group_index:>5}  " + "  ".join(f"{v:7.3f}" for v in s.as_array()))

# A flat group has no spread, so its z-score is pinned to zero instead of dividing by zero.

# In[3]:

flat = IntensityRecord(np.full(16, 0.4))
print(process_record(flat)[0])

# The classifier sees four timesteps. In raw mode each step is the group
# itself; in processed mode the eight statistics are appended.

# In[4]:

print(assemble_sequence(record, "raw").timesteps.shape)
print(assemble_sequence(record, "processed").timesteps.shape)

# Multiplying every intensity by a constant leaves z-score and pd untouched.

# In[5]:

a = process_record(record)[1]
b = process_record(record.scaled(10.0))[1]
print(a.zscore, b.zscore)
print(a.pd, b.pd)
