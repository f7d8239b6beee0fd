class Status:
    Ok = 0
    RuntimeFailure = 1
    UsageError = 2
